#include "flipaudit/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "flipaudit/parsing.hpp"
#include "flipaudit/runner.hpp"
#include "flipaudit/text.hpp"

namespace flipaudit {

using nlohmann::json;

LoadedRun load_run(const std::filesystem::path& dir) {
  LoadedRun run;
  run.dir = dir;
  {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw std::runtime_error("not a run directory (no manifest.json): " +
                                      dir.string());
    in >> run.manifest;
  }
  std::ifstream cells(dir / "cell_stats.json");
  if (cells) {
    json arr;
    cells >> arr;
    for (const auto& c : arr) {
      stats::CellStats cs;
      cs.domain = domain_from_string(c.at("domain").get<std::string>());
      cs.bias_type = bias_type_from_string(c.at("bias_type").get<std::string>());
      cs.model = c.at("model").get<std::string>();
      cs.n = c.at("n").get<std::int64_t>();
      cs.k = c.at("k").get<std::int64_t>();
      cs.flip_rate = c.at("flip_rate").get<double>();
      cs.wilson_low = c.at("wilson_low").get<double>();
      cs.wilson_high = c.at("wilson_high").get<double>();
      cs.p_value = c.at("p_value").get<double>();
      cs.rejected_after_fdr = c.at("rejected_after_fdr").get<bool>();
      cs.excluded = c.at("excluded").get<std::int64_t>();
      run.cells.push_back(cs);
    }
  }
  return run;
}

double percent1(double fraction) {
  return std::round(fraction * 1000.0) / 10.0;
}

std::optional<int> relative_delta_percent(double free_pct, double struct_pct) {
  if (free_pct == 0.0) {
    if (struct_pct == 0.0) return 0;
    return std::nullopt;
  }
  double delta = (struct_pct - free_pct) / free_pct * 100.0;
  return static_cast<int>(std::llround(delta));
}

std::string format_signed_percent(std::optional<int> delta) {
  if (!delta) return "n/a";
  if (*delta > 0) return "+" + std::to_string(*delta) + "%";
  if (*delta == 0) return "0%";
  return std::to_string(*delta) + "%";  // minus sign carried by the int
}

namespace {

struct Counts {
  std::int64_t n = 0;
  std::int64_t k = 0;
  double rate() const { return n == 0 ? 0.0 : static_cast<double>(k) / n; }
};

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += "\"";
  return out;
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace

ReportTables cmd_report(const std::vector<std::filesystem::path>& run_dirs,
                        const std::filesystem::path& out_dir) {
  if (run_dirs.empty()) throw std::invalid_argument("report: at least one run directory");

  std::vector<LoadedRun> runs;
  for (const auto& dir : run_dirs) runs.push_back(load_run(dir));

  const std::string corpus_hash = runs.front().manifest.at("corpus_hash").get<std::string>();
  for (const auto& run : runs) {
    if (run.manifest.at("corpus_hash").get<std::string>() != corpus_hash)
      throw std::runtime_error("report: corpus hash mismatch between " +
                               runs.front().dir.string() + " and " + run.dir.string() +
                               "; refusing to pool across different corpora");
  }

  // Pool included/flip counts; rates are always flips-over-pairs, never an
  // average of rates.
  std::map<std::pair<std::string, BiasType>, Counts> model_bias_free;
  std::map<std::string, Counts> model_overall_free;
  std::map<std::string, Counts> model_overall_struct;
  std::map<std::pair<Domain, BiasType>, Counts> domain_bias;
  std::map<std::pair<Domain, BiasType>, std::int64_t> domain_excluded;

  for (const auto& run : runs) {
    std::string mode = run.manifest.at("mode").get<std::string>();
    for (const auto& c : run.cells) {
      if (mode == "freeform" || mode == "validate") {
        model_bias_free[{c.model, c.bias_type}].n += c.n;
        model_bias_free[{c.model, c.bias_type}].k += c.k;
        model_overall_free[c.model].n += c.n;
        model_overall_free[c.model].k += c.k;
        domain_bias[{c.domain, c.bias_type}].n += c.n;
        domain_bias[{c.domain, c.bias_type}].k += c.k;
        domain_excluded[{c.domain, c.bias_type}] += c.excluded;
      } else if (mode == "structured") {
        model_overall_struct[c.model].n += c.n;
        model_overall_struct[c.model].k += c.k;
      }
    }
  }

  ReportTables tables;

  // Model x bias table (free-form).
  {
    json rows = json::array();
    std::set<std::string> models;
    for (const auto& [key, _] : model_bias_free) models.insert(key.first);
    for (const auto& model : models) {
      json row{{"model", model}};
      for (BiasType b : kAllBiasTypes) {
        auto it = model_bias_free.find({model, b});
        if (it == model_bias_free.end()) {
          row[to_string(b)] = nullptr;
          continue;
        }
        row[to_string(b)] = percent1(it->second.rate());
        row[to_string(b) + "_n"] = it->second.n;
        row[to_string(b) + "_k"] = it->second.k;
      }
      const Counts& overall = model_overall_free.at(model);
      row["overall"] = percent1(overall.rate());
      row["overall_n"] = overall.n;
      row["overall_k"] = overall.k;
      rows.push_back(std::move(row));
    }
    tables.model_bias = rows;
  }

  // Domain x bias table pooled across models, Wilson CIs from pooled counts.
  {
    json rows = json::array();
    for (Domain d : kAllDomains) {
      bool any = false;
      json row{{"domain", to_string(d)}};
      for (BiasType b : kAllBiasTypes) {
        auto it = domain_bias.find({d, b});
        if (it == domain_bias.end() || it->second.n == 0) {
          row[to_string(b)] = nullptr;
          continue;
        }
        any = true;
        stats::Interval iv = stats::wilson_interval(it->second.k, it->second.n, 0.95);
        row[to_string(b)] = json{{"rate", percent1(it->second.rate())},
                                 {"ci_low", percent1(iv.low)},
                                 {"ci_high", percent1(iv.high)},
                                 {"n", it->second.n},
                                 {"k", it->second.k},
                                 {"excluded", domain_excluded[{d, b}]}};
      }
      if (any) rows.push_back(std::move(row));
    }
    tables.domain_bias = rows;
  }

  // Free-form vs structured reduction table.
  {
    json rows = json::array();
    for (const auto& [model, free_counts] : model_overall_free) {
      auto it = model_overall_struct.find(model);
      if (it == model_overall_struct.end()) continue;
      double free_pct = percent1(free_counts.rate());
      double struct_pct = percent1(it->second.rate());
      std::optional<int> delta = relative_delta_percent(free_pct, struct_pct);
      rows.push_back({{"model", model},
                      {"free", free_pct},
                      {"structured", struct_pct},
                      {"free_n", free_counts.n},
                      {"free_k", free_counts.k},
                      {"structured_n", it->second.n},
                      {"structured_k", it->second.k},
                      {"delta", delta ? json(*delta) : json()},
                      {"delta_display", format_signed_percent(delta)}});
    }
    std::sort(rows.begin(), rows.end(), [](const json& a, const json& b) {
      int da = a.at("delta").is_null() ? INT32_MAX : a.at("delta").get<int>();
      int db = b.at("delta").is_null() ? INT32_MAX : b.at("delta").get<int>();
      return da < db;
    });
    tables.reduction = rows;
  }

  // Persist CSV + JSON + text summary.
  std::filesystem::create_directories(out_dir);
  {
    std::ostringstream csv;
    csv << "model,demographic,authority,framing,overall\n";
    for (const auto& row : tables.model_bias) {
      csv << csv_escape(row.at("model").get<std::string>());
      for (const char* col : {"demographic", "authority", "framing", "overall"}) {
        csv << ',';
        if (row.contains(col) && !row.at(col).is_null()) csv << row.at(col).get<double>();
      }
      csv << '\n';
    }
    write_text_file(out_dir / "report_model_bias.csv", csv.str());
    write_json_file(out_dir / "report_model_bias.json", tables.model_bias);
  }
  {
    std::ostringstream csv;
    csv << "domain,bias_type,rate,ci_low,ci_high,n,k,excluded\n";
    for (const auto& row : tables.domain_bias) {
      for (BiasType b : kAllBiasTypes) {
        const std::string col = to_string(b);
        if (!row.contains(col) || row.at(col).is_null()) continue;
        const json& cell = row.at(col);
        csv << row.at("domain").get<std::string>() << ',' << col << ','
            << cell.at("rate").get<double>() << ',' << cell.at("ci_low").get<double>()
            << ',' << cell.at("ci_high").get<double>() << ',' << cell.at("n").get<std::int64_t>()
            << ',' << cell.at("k").get<std::int64_t>() << ','
            << cell.at("excluded").get<std::int64_t>() << '\n';
      }
    }
    write_text_file(out_dir / "report_domain_bias.csv", csv.str());
    write_json_file(out_dir / "report_domain_bias.json", tables.domain_bias);
  }
  {
    std::ostringstream csv;
    csv << "model,free,structured,delta\n";
    for (const auto& row : tables.reduction) {
      csv << csv_escape(row.at("model").get<std::string>()) << ','
          << row.at("free").get<double>() << ',' << row.at("structured").get<double>()
          << ',' << row.at("delta_display").get<std::string>() << '\n';
    }
    write_text_file(out_dir / "report_reduction.csv", csv.str());
    write_json_file(out_dir / "report_reduction.json", tables.reduction);
  }

  std::ostringstream summary;
  summary << "pooled " << runs.size() << " run(s), corpus " << corpus_hash.substr(0, 12)
          << "\n";
  summary << "models (free-form): " << tables.model_bias.size()
          << ", reduction rows: " << tables.reduction.size() << "\n";
  for (const auto& row : tables.reduction) {
    char line[160];
    std::snprintf(line, sizeof(line), "  %s: %.1f%% -> %.1f%% (%s)\n",
                  row.at("model").get<std::string>().c_str(),
                  row.at("free").get<double>(), row.at("structured").get<double>(),
                  row.at("delta_display").get<std::string>().c_str());
    summary << line;
  }
  tables.text_summary = summary.str();
  write_text_file(out_dir / "summary.txt", tables.text_summary);
  return tables;
}

namespace {

// Rebuild per-cell indicator lists from persisted decision records.
std::map<std::tuple<Domain, BiasType, std::string>, std::vector<stats::FlipIndicator>>
collect_indicators(const std::filesystem::path& run_dir, const std::string& mode) {
  std::map<std::tuple<Domain, BiasType, std::string>, std::vector<stats::FlipIndicator>>
      out;
  std::filesystem::path file =
      run_dir / (mode == "structured" ? "structured_decisions.jsonl" : "decisions.jsonl");
  std::ifstream in(file);
  if (!in) throw std::runtime_error("verify-report: cannot open " + file.string());
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json rec = json::parse(line);
    Domain d = domain_from_string(rec.at("domain").get<std::string>());
    BiasType b = bias_type_from_string(rec.at("bias_type").get<std::string>());
    std::string model = rec.at("model").get<std::string>();
    stats::FlipIndicator indicator =
        stats::flip_indicator_from_string(rec.at("indicator").get<std::string>());

    if (mode == "structured") {
      // Re-derive the indicator from the persisted decisions.
      if (rec.contains("base_decision") && rec.contains("swap_decision")) {
        std::string base = rec.at("base_decision").at("decision").get<std::string>();
        std::string swap = rec.at("swap_decision").at("decision").get<std::string>();
        indicator = base != swap ? stats::FlipIndicator::Flip : stats::FlipIndicator::NoFlip;
      } else {
        indicator = stats::FlipIndicator::Excluded;
      }
    } else {
      int base = rec.at("base").at("decision").get<int>();
      int swap = rec.at("swap").at("decision").get<int>();
      indicator = (base == kUnparsed || swap == kUnparsed)
                      ? stats::FlipIndicator::Excluded
                      : (base != swap ? stats::FlipIndicator::Flip
                                      : stats::FlipIndicator::NoFlip);
    }
    out[{d, b, model}].push_back(indicator);
  }
  return out;
}

bool close(double a, double b) { return std::abs(a - b) <= 1e-9; }

}  // namespace

std::vector<std::string> verify_report(const std::filesystem::path& run_dir) {
  LoadedRun run = load_run(run_dir);
  std::string mode = run.manifest.at("mode").get<std::string>();
  if (mode != "freeform" && mode != "structured" && mode != "validate")
    throw std::invalid_argument("verify-report supports freeform/structured runs, got " +
                                mode);

  double p0 = run.manifest.at("noise_baseline").at("p0").get<double>();
  double q = run.manifest.at("config").at("fdr_q").get<double>();

  auto indicators = collect_indicators(run_dir, mode);
  std::vector<stats::CellStats> recomputed;
  for (const auto& [key, inds] : indicators) {
    const auto& [domain, bias, model] = key;
    bool all_excluded = std::all_of(inds.begin(), inds.end(), [](stats::FlipIndicator f) {
      return f == stats::FlipIndicator::Excluded;
    });
    if (all_excluded) {
      stats::CellStats cs;
      cs.domain = domain;
      cs.bias_type = bias;
      cs.model = model;
      cs.excluded = static_cast<std::int64_t>(inds.size());
      cs.p_value = 1.0;
      recomputed.push_back(cs);
      continue;
    }
    recomputed.push_back(stats::make_cell_stats(domain, bias, model, inds, p0));
  }
  if (!recomputed.empty()) stats::apply_fdr(recomputed, q);

  std::vector<std::string> mismatches;
  auto find_cell = [&](const stats::CellStats& c) -> const stats::CellStats* {
    for (const auto& r : recomputed) {
      if (r.domain == c.domain && r.bias_type == c.bias_type && r.model == c.model)
        return &r;
    }
    return nullptr;
  };

  if (run.cells.size() != recomputed.size())
    mismatches.push_back("cell count: stored " + std::to_string(run.cells.size()) +
                         ", recomputed " + std::to_string(recomputed.size()));
  for (const auto& stored : run.cells) {
    const stats::CellStats* r = find_cell(stored);
    std::string cell_name = to_string(stored.domain) + "/" + to_string(stored.bias_type) +
                            "/" + stored.model;
    if (r == nullptr) {
      mismatches.push_back(cell_name + ": missing from recomputation");
      continue;
    }
    if (stored.n != r->n || stored.k != r->k || stored.excluded != r->excluded)
      mismatches.push_back(cell_name + ": counts differ");
    if (!close(stored.flip_rate, r->flip_rate) || !close(stored.wilson_low, r->wilson_low) ||
        !close(stored.wilson_high, r->wilson_high) || !close(stored.p_value, r->p_value))
      mismatches.push_back(cell_name + ": statistics differ");
    if (stored.rejected_after_fdr != r->rejected_after_fdr)
      mismatches.push_back(cell_name + ": FDR rejection differs");
  }
  return mismatches;
}

}  // namespace flipaudit
