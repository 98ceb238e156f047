#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "flipaudit/audit_loop.hpp"
#include "flipaudit/report.hpp"
#include "flipaudit/runner.hpp"

namespace {

using namespace flipaudit;

std::vector<Domain> parse_domains(const std::string& csv) {
  if (csv.empty() || csv == "all")
    return {kAllDomains.begin(), kAllDomains.end()};
  std::vector<Domain> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(domain_from_string(trim(item)));
  return out;
}

std::vector<BiasType> parse_bias_types(const std::string& csv) {
  if (csv.empty() || csv == "all")
    return {kAllBiasTypes.begin(), kAllBiasTypes.end()};
  std::vector<BiasType> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(bias_type_from_string(trim(item)));
  return out;
}

int run_with_mode(const std::string& config_path, std::optional<RunMode> mode_override) {
  RunConfig config = load_run_config(config_path);
  if (mode_override) config.mode = *mode_override;
  RunOutcome outcome = cmd_run(config);
  std::cout << outcome.summary << "\nrun directory: " << outcome.run_dir.string() << "\n";
  return outcome.exit_code;
}

// Rebuild structured outcomes from a persisted run for offline diagnosis.
std::vector<StructuredOutcome> load_structured_outcomes(
    const std::filesystem::path& run_dir) {
  std::ifstream in(run_dir / "structured_decisions.jsonl");
  if (!in)
    throw std::runtime_error("no structured_decisions.jsonl in " + run_dir.string());
  std::vector<StructuredOutcome> outcomes;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json rec = nlohmann::json::parse(line);
    StructuredOutcome o;
    o.pair_id = rec.at("pair_id").get<std::string>();
    o.domain = domain_from_string(rec.at("domain").get<std::string>());
    o.bias_type = bias_type_from_string(rec.at("bias_type").get<std::string>());
    o.indicator =
        stats::flip_indicator_from_string(rec.at("indicator").get<std::string>());
    auto load_features = [&](const char* key, Side side) {
      ExtractedFeatures f;
      f.pair_id = o.pair_id;
      f.side = side;
      const auto& j = rec.at(key);
      f.schema_id = j.value("schema_id", "");
      f.validation =
          feature_validation_from_string(j.at("validation").get<std::string>());
      f.values = j.at("values").get<std::map<std::string, std::string>>();
      return f;
    };
    o.base_features = load_features("base_features", Side::Base);
    o.swap_features = load_features("swap_features", Side::Swap);
    auto load_decision = [&](const char* key, Side side) -> std::optional<RubricDecision> {
      if (!rec.contains(key)) return std::nullopt;
      RubricDecision d;
      d.pair_id = o.pair_id;
      d.side = side;
      d.score = rec.at(key).at("score").get<int>();
      d.decision = rec.at(key).at("decision").get<std::string>();
      return d;
    };
    o.base_decision = load_decision("base_decision", Side::Base);
    o.swap_decision = load_decision("swap_decision", Side::Swap);
    outcomes.push_back(std::move(o));
  }
  return outcomes;
}

double freeform_rate_from_run(const std::filesystem::path& run_dir, Domain domain) {
  LoadedRun run = load_run(run_dir);
  std::int64_t n = 0;
  std::int64_t k = 0;
  for (const auto& c : run.cells) {
    if (c.domain != domain) continue;
    n += c.n;
    k += c.k;
  }
  if (n == 0)
    throw std::runtime_error("free-form run has no included pairs for domain " +
                             to_string(domain));
  return static_cast<double>(k) / static_cast<double>(n);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flipaudit: intervention-consistency bias audit for decision models"};
  app.require_subcommand(1);

  // generate
  auto* generate = app.add_subcommand("generate", "instantiate a vignette corpus from templates");
  GenerateOptions gen;
  std::string gen_domains = "all";
  std::string gen_bias = "all";
  generate->add_option("--templates", gen.templates_path, "templates JSON file")->required();
  generate->add_option("--swap-pools", gen.swap_pools_path, "swap-pool JSONL file")->required();
  generate->add_option("--per-area", gen.per_area, "pairs per (domain, bias type) cell");
  generate->add_option("--domains", gen_domains, "comma-separated domains or 'all'");
  generate->add_option("--bias-types", gen_bias, "comma-separated bias types or 'all'");
  generate->add_option("--out", gen.output_path, "output corpus path")->required();

  // run + mode-forcing aliases
  std::string config_path;
  auto* run = app.add_subcommand("run", "execute the mode selected in the config");
  run->add_option("--config", config_path, "run configuration file")->required();
  auto* controls = app.add_subcommand("controls", "measure the noise baseline on control pairs");
  controls->add_option("--config", config_path, "run configuration file")->required();
  auto* structured = app.add_subcommand("structured", "run the extract-then-rubric pipeline");
  structured->add_option("--config", config_path, "run configuration file")->required();
  auto* winrate = app.add_subcommand("winrate", "randomization test against same-region perturbations");
  winrate->add_option("--config", config_path, "run configuration file")->required();
  auto* validate_flips = app.add_subcommand("validate-flips", "classify flips as spurious vs reasoned");
  validate_flips->add_option("--config", config_path, "run configuration file")->required();

  // loop
  auto* loop = app.add_subcommand("loop", "detect-diagnose-mitigate-verify cycle");
  loop->require_subcommand(1);

  auto* diagnose_cmd = loop->add_subcommand("diagnose", "localize bias-leaking fields in a structured run");
  std::string diag_run_dir, diag_rubric;
  diagnose_cmd->add_option("--run", diag_run_dir, "structured run directory")->required();
  diagnose_cmd->add_option("--rubric", diag_rubric, "rubric JSON file")->required();

  auto* patch_cmd = loop->add_subcommand("patch", "record an extraction-prompt patch");
  std::string patch_rubric, patch_fields, patch_text, patch_markers, patch_evidence,
      patch_out, patch_ledger;
  patch_cmd->add_option("--rubric", patch_rubric, "rubric JSON file")->required();
  patch_cmd->add_option("--fields", patch_fields, "comma-separated targeted fields")->required();
  patch_cmd->add_option("--text", patch_text, "human patch text (omit to use the template)");
  patch_cmd->add_option("--markers", patch_markers, "bias markers for the templated patch");
  patch_cmd->add_option("--evidence", patch_evidence, "relevant evidence for the templated patch");
  patch_cmd->add_option("--out", patch_out, "path for the patched rubric")->required();
  patch_cmd->add_option("--ledger", patch_ledger, "loop ledger file")->required();

  auto* verify_cmd = loop->add_subcommand("verify", "re-run and compare rubric versions");
  std::string verify_config, verify_before, verify_after, verify_ledger, verify_freeform_run;
  double verify_freeform_rate = -1.0;
  int verify_iteration = 1;
  verify_cmd->add_option("--config", verify_config, "run configuration file")->required();
  verify_cmd->add_option("--rubric-before", verify_before, "rubric before the patch")->required();
  verify_cmd->add_option("--rubric-after", verify_after, "rubric after the patch")->required();
  verify_cmd->add_option("--ledger", verify_ledger, "loop ledger file")->required();
  verify_cmd->add_option("--freeform-rate", verify_freeform_rate, "free-form baseline flip rate (fraction)");
  verify_cmd->add_option("--freeform-run", verify_freeform_run, "free-form run directory for the baseline");
  verify_cmd->add_option("--iteration", verify_iteration, "loop iteration index");

  // report
  auto* report = app.add_subcommand("report", "emit tables from one or more runs");
  std::vector<std::string> report_dirs;
  std::string report_out = "report";
  bool verify_flag = false;
  report->add_option("runs", report_dirs, "run directories")->required();
  report->add_option("--out", report_out, "output directory for tables");
  report->add_flag("--verify-report", verify_flag,
                   "recompute statistics from decision records and diff");

  // enumerate-rubric
  auto* enumerate = app.add_subcommand("enumerate-rubric", "full decision table of a rubric");
  std::string enum_rubric, enum_out;
  std::size_t enum_cap = 100000;
  enumerate->add_option("--rubric", enum_rubric, "rubric JSON file")->required();
  enumerate->add_option("--out", enum_out, "write CSV here instead of stdout");
  enumerate->add_option("--cap", enum_cap, "combination cap");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*generate) {
      gen.domains = parse_domains(gen_domains);
      gen.bias_types = parse_bias_types(gen_bias);
      cmd_generate(gen);
      std::cout << "corpus written to " << gen.output_path << "\n";
      return 0;
    }
    if (*run) return run_with_mode(config_path, std::nullopt);
    if (*controls) return run_with_mode(config_path, RunMode::Controls);
    if (*structured) return run_with_mode(config_path, RunMode::Structured);
    if (*winrate) return run_with_mode(config_path, RunMode::Winrate);
    if (*validate_flips) return run_with_mode(config_path, RunMode::Validate);

    if (*diagnose_cmd) {
      RubricSpec rubric = load_rubric(diag_rubric);
      auto outcomes = load_structured_outcomes(diag_run_dir);
      DiagnoseResult result = diagnose(outcomes, rubric);
      std::cout << result.diagnoses.size() << " flip(s) diagnosed, "
                << result.extraction_failures.size() << " extraction failure(s)\n";
      std::cout << "field leak counts (one-at-a-time ablation):\n";
      for (const auto& [field, count] : result.field_leak_counts)
        std::cout << "  " << field << ": " << count << "\n";
      for (const auto& d : result.diagnoses) {
        std::cout << d.pair_id << " [" << to_string(d.bias_type) << "]";
        for (const auto& f : d.differing_fields)
          std::cout << " " << f.field << "(" << f.base_value << "->" << f.swap_value << ")";
        if (d.rubric_only) std::cout << " (no rule impact)";
        std::cout << "\n";
      }
      return 0;
    }
    if (*patch_cmd) {
      RubricSpec rubric = load_rubric(patch_rubric);
      std::vector<std::string> fields;
      std::stringstream ss(patch_fields);
      std::string item;
      while (std::getline(ss, item, ',')) fields.push_back(trim(item));
      PatchRecord record =
          patch_text.empty()
              ? make_templated_patch(rubric, fields,
                                     patch_markers.empty() ? "bias markers" : patch_markers,
                                     patch_evidence.empty() ? "the recorded evidence"
                                                            : patch_evidence)
              : make_human_patch(rubric, fields, patch_text);
      RubricSpec patched = apply_patch(rubric, record);
      save_rubric(patch_out, patched);
      append_ledger(patch_ledger, record);
      std::cout << "rubric " << rubric.schema_id << " v" << rubric.prompt_version
                << " -> v" << patched.prompt_version << " written to " << patch_out
                << "\npatch text: " << record.patch_text << "\n";
      return 0;
    }
    if (*verify_cmd) {
      RunConfig config = load_run_config(verify_config);
      validate(config);
      RubricSpec before = load_rubric(verify_before);
      RubricSpec after = load_rubric(verify_after);
      std::vector<VignettePair> corpus = load_corpus(config.corpus_path);
      std::vector<VignettePair> selected = select_pairs(corpus, config);
      std::vector<VignettePair> pairs;
      for (const auto& p : selected)
        if (p.domain == before.domain) pairs.push_back(p);

      VerifyOptions options;
      options.iteration = verify_iteration;
      options.parallelism = config.parallelism;
      if (verify_freeform_rate >= 0.0) options.freeform_rate = verify_freeform_rate;
      else if (!verify_freeform_run.empty())
        options.freeform_rate = freeform_rate_from_run(verify_freeform_run, before.domain);

      ModelGateway gateway(config.endpoints.front(),
                           config.cache_dir.empty() ? ResponseCache()
                                                    : ResponseCache(config.cache_dir));
      LoopReport loop_report = verify(pairs, gateway, before, after, options);
      append_ledger(verify_ledger, loop_report);
      std::cout << "verify: before " << loop_report.before_k << "/" << loop_report.before_n
                << " -> after " << loop_report.after_k << "/" << loop_report.after_n << "\n";
      if (loop_report.freeform_rate) {
        std::cout << arrow_summary(*loop_report.freeform_rate, loop_report.rate_before,
                                   loop_report.rate_after)
                  << "\n";
      }
      return 0;
    }

    if (*report) {
      std::vector<std::filesystem::path> dirs(report_dirs.begin(), report_dirs.end());
      if (verify_flag) {
        bool ok = true;
        for (const auto& dir : dirs) {
          auto mismatches = verify_report(dir);
          if (mismatches.empty()) {
            std::cout << dir.string() << ": report verified\n";
          } else {
            ok = false;
            std::cout << dir.string() << ": MISMATCH\n";
            for (const auto& m : mismatches) std::cout << "  " << m << "\n";
          }
        }
        return ok ? 0 : 1;
      }
      ReportTables tables = cmd_report(dirs, report_out);
      std::cout << tables.text_summary;
      std::cout << "tables written to " << report_out << "\n";
      return 0;
    }

    if (*enumerate) {
      RubricSpec rubric = load_rubric(enum_rubric);
      auto table = enumerate_rubric(rubric, enum_cap);
      if (enum_out.empty()) {
        write_decision_table_csv(std::cout, rubric, table);
      } else {
        std::ofstream out(enum_out);
        if (!out) throw std::runtime_error("cannot write " + enum_out);
        write_decision_table_csv(out, rubric, table);
        std::cout << table.size() << " rows written to " << enum_out << "\n";
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
