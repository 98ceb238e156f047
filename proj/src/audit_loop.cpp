#include "flipaudit/audit_loop.hpp"

#include <algorithm>
#include <cmath>
#include <ctime>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace flipaudit {

using nlohmann::json;

namespace {

std::string iso8601_now() {
  std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

bool rule_matches(const RubricRule& rule,
                  const std::map<std::string, std::string>& values) {
  auto it = values.find(rule.field);
  return it != values.end() && it->second == rule.equals;
}

std::string rule_descriptor(const RubricRule& rule) {
  char sign = rule.increment >= 0 ? '+' : '-';
  return rule.field + "=" + rule.equals + ":" + sign +
         std::to_string(std::abs(rule.increment));
}

}  // namespace

DiagnoseResult diagnose(const std::vector<StructuredOutcome>& outcomes,
                        const RubricSpec& rubric) {
  DiagnoseResult result;
  for (const StructuredOutcome& o : outcomes) {
    if (o.indicator != stats::FlipIndicator::Flip) continue;
    if (o.base_features.validation != FeatureValidation::Valid ||
        o.swap_features.validation != FeatureValidation::Valid ||
        !o.base_decision || !o.swap_decision) {
      result.extraction_failures.push_back(o.pair_id);
      continue;
    }

    FlipDiagnosis d;
    d.pair_id = o.pair_id;
    d.bias_type = o.bias_type;

    for (const FeatureField& f : rubric.fields) {
      auto base_it = o.base_features.values.find(f.name);
      auto swap_it = o.swap_features.values.find(f.name);
      std::string base_value = base_it != o.base_features.values.end() ? base_it->second : "";
      std::string swap_value = swap_it != o.swap_features.values.end() ? swap_it->second : "";
      if (base_value != swap_value)
        d.differing_fields.push_back({f.name, base_value, swap_value});
    }

    for (const RubricRule& rule : rubric.rules) {
      if (rule_matches(rule, o.base_features.values) !=
          rule_matches(rule, o.swap_features.values))
        d.rule_impact.push_back(rule_descriptor(rule));
    }

    // One-at-a-time ablation: revert each differing field on the swap side
    // and see whether the decision moves. Rubric-only, no model calls.
    for (const FieldDiff& diff : d.differing_fields) {
      ExtractedFeatures reverted = o.swap_features;
      reverted.values[diff.field] = diff.base_value;
      RubricDecision rd = decide(reverted, rubric);
      if (rd.decision != o.swap_decision->decision)
        d.decisive_fields.push_back(diff.field);
    }

    d.rubric_only = !d.differing_fields.empty() && d.rule_impact.empty();
    for (const std::string& field : d.decisive_fields)
      ++result.field_leak_counts[field];
    result.diagnoses.push_back(std::move(d));
  }
  return result;
}

std::string to_string(PatchAuthor a) {
  return a == PatchAuthor::Human ? "human" : "templated";
}

PatchAuthor patch_author_from_string(std::string_view s) {
  if (s == "human") return PatchAuthor::Human;
  if (s == "templated") return PatchAuthor::Templated;
  throw std::invalid_argument("unknown patch author: " + std::string(s));
}

json patch_to_json(const PatchRecord& p) {
  return json{{"record", "patch"},
              {"schema_id", p.schema_id},
              {"prompt_version_from", p.prompt_version_from},
              {"prompt_version_to", p.prompt_version_to},
              {"targeted_fields", p.targeted_fields},
              {"patch_text", p.patch_text},
              {"author", to_string(p.author)},
              {"timestamp", p.timestamp}};
}

PatchRecord patch_from_json(const json& j) {
  PatchRecord p;
  p.schema_id = j.at("schema_id").get<std::string>();
  p.prompt_version_from = j.at("prompt_version_from").get<int>();
  p.prompt_version_to = j.at("prompt_version_to").get<int>();
  p.targeted_fields = j.at("targeted_fields").get<std::vector<std::string>>();
  p.patch_text = j.at("patch_text").get<std::string>();
  p.author = patch_author_from_string(j.at("author").get<std::string>());
  p.timestamp = j.value("timestamp", "");
  return p;
}

namespace {

void check_patch_fields(const RubricSpec& rubric,
                        const std::vector<std::string>& targeted_fields) {
  for (const auto& name : targeted_fields) {
    bool declared = std::any_of(rubric.fields.begin(), rubric.fields.end(),
                                [&](const FeatureField& f) { return f.name == name; });
    if (!declared)
      throw std::invalid_argument("patch targets unknown field '" + name + "'");
  }
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i > 0) out += sep;
    out += parts[i];
  }
  return out;
}

}  // namespace

PatchRecord make_templated_patch(const RubricSpec& rubric,
                                 const std::vector<std::string>& targeted_fields,
                                 const std::string& bias_markers,
                                 const std::string& relevant_evidence) {
  if (targeted_fields.empty())
    throw std::invalid_argument("templated patch needs at least one targeted field");
  check_patch_fields(rubric, targeted_fields);
  PatchRecord p;
  p.schema_id = rubric.schema_id;
  p.prompt_version_from = rubric.prompt_version;
  p.prompt_version_to = rubric.prompt_version + 1;
  p.targeted_fields = targeted_fields;
  p.patch_text = "When extracting " + join(targeted_fields, ", ") + ", ignore " +
                 bias_markers + "; extract from " + relevant_evidence + " only.";
  p.author = PatchAuthor::Templated;
  p.timestamp = iso8601_now();
  return p;
}

PatchRecord make_human_patch(const RubricSpec& rubric,
                             const std::vector<std::string>& targeted_fields,
                             const std::string& patch_text) {
  if (patch_text.empty()) throw std::invalid_argument("patch text must be non-empty");
  check_patch_fields(rubric, targeted_fields);
  PatchRecord p;
  p.schema_id = rubric.schema_id;
  p.prompt_version_from = rubric.prompt_version;
  p.prompt_version_to = rubric.prompt_version + 1;
  p.targeted_fields = targeted_fields;
  p.patch_text = patch_text;
  p.author = PatchAuthor::Human;
  p.timestamp = iso8601_now();
  return p;
}

RubricSpec apply_patch(const RubricSpec& rubric, const PatchRecord& patch) {
  if (patch.schema_id != rubric.schema_id)
    throw std::invalid_argument("patch schema '" + patch.schema_id +
                                "' does not match rubric '" + rubric.schema_id + "'");
  if (patch.prompt_version_from != rubric.prompt_version)
    throw std::invalid_argument(
        "patch expects rubric prompt_version " + std::to_string(patch.prompt_version_from) +
        " but rubric is at " + std::to_string(rubric.prompt_version));
  if (patch.prompt_version_to != patch.prompt_version_from + 1)
    throw std::invalid_argument("patch must increment the version by exactly 1");
  check_patch_fields(rubric, patch.targeted_fields);

  RubricSpec patched = rubric;
  patched.extraction_prompt += "\n" + patch.patch_text;
  patched.prompt_version = patch.prompt_version_to;
  return patched;
}

json loop_report_to_json(const LoopReport& r) {
  json j{{"record", "loop_report"},
         {"iteration", r.iteration},
         {"schema_id", r.schema_id},
         {"rubric_version_before", r.rubric_version_before},
         {"rubric_version_after", r.rubric_version_after},
         {"before_n", r.before_n},
         {"before_k", r.before_k},
         {"after_n", r.after_n},
         {"after_k", r.after_k},
         {"rate_before", r.rate_before},
         {"rate_after", r.rate_after},
         {"leaks_before", r.leaks_before},
         {"leaks_after", r.leaks_after}};
  if (r.freeform_rate) j["freeform_rate"] = *r.freeform_rate;
  if (r.cumulative_reduction) j["cumulative_reduction"] = *r.cumulative_reduction;
  return j;
}

LoopReport loop_report_from_json(const json& j) {
  LoopReport r;
  r.iteration = j.at("iteration").get<int>();
  r.schema_id = j.value("schema_id", "");
  r.rubric_version_before = j.value("rubric_version_before", 1);
  r.rubric_version_after = j.value("rubric_version_after", 1);
  r.before_n = j.at("before_n").get<std::int64_t>();
  r.before_k = j.at("before_k").get<std::int64_t>();
  r.after_n = j.at("after_n").get<std::int64_t>();
  r.after_k = j.at("after_k").get<std::int64_t>();
  r.rate_before = j.at("rate_before").get<double>();
  r.rate_after = j.at("rate_after").get<double>();
  if (j.contains("leaks_before"))
    r.leaks_before = j.at("leaks_before").get<std::map<std::string, std::int64_t>>();
  if (j.contains("leaks_after"))
    r.leaks_after = j.at("leaks_after").get<std::map<std::string, std::int64_t>>();
  if (j.contains("freeform_rate")) r.freeform_rate = j.at("freeform_rate").get<double>();
  if (j.contains("cumulative_reduction"))
    r.cumulative_reduction = j.at("cumulative_reduction").get<double>();
  return r;
}

LoopReport verify(const std::vector<VignettePair>& pairs, ModelGateway& gateway,
                  const RubricSpec& rubric_before, const RubricSpec& rubric_after,
                  const VerifyOptions& options) {
  if (rubric_before.schema_id != rubric_after.schema_id)
    throw std::invalid_argument("verify: rubrics must share a schema_id");

  RunStructuredResult before = run_structured(pairs, gateway, rubric_before,
                                              options.parallelism);
  RunStructuredResult after = run_structured(pairs, gateway, rubric_after,
                                             options.parallelism);

  auto count = [](const RunStructuredResult& r) {
    std::pair<std::int64_t, std::int64_t> nk{0, 0};
    for (const auto& o : r.outcomes) {
      if (o.indicator == stats::FlipIndicator::Excluded) continue;
      ++nk.first;
      if (o.indicator == stats::FlipIndicator::Flip) ++nk.second;
    }
    return nk;
  };

  LoopReport report;
  report.iteration = options.iteration;
  report.schema_id = rubric_before.schema_id;
  report.rubric_version_before = rubric_before.prompt_version;
  report.rubric_version_after = rubric_after.prompt_version;
  std::tie(report.before_n, report.before_k) = count(before);
  std::tie(report.after_n, report.after_k) = count(after);
  if (report.before_n == 0 || report.after_n == 0)
    throw std::runtime_error("verify: no included pairs in one of the runs");
  report.rate_before = static_cast<double>(report.before_k) / report.before_n;
  report.rate_after = static_cast<double>(report.after_k) / report.after_n;
  report.leaks_before = diagnose(before.outcomes, rubric_before).field_leak_counts;
  report.leaks_after = diagnose(after.outcomes, rubric_after).field_leak_counts;
  report.freeform_rate = options.freeform_rate;
  if (options.freeform_rate && *options.freeform_rate > 0.0)
    report.cumulative_reduction = 1.0 - report.rate_after / *options.freeform_rate;
  return report;
}

void append_ledger(const std::string& path, const PatchRecord& patch) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("cannot append to loop ledger: " + path);
  out << patch_to_json(patch).dump() << '\n';
}

void append_ledger(const std::string& path, const LoopReport& report) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("cannot append to loop ledger: " + path);
  out << loop_report_to_json(report).dump() << '\n';
}

std::vector<LedgerEntry> load_ledger(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open loop ledger: " + path);
  std::vector<LedgerEntry> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("record"))
      throw std::runtime_error(path + ": line " + std::to_string(line_no) +
                               ": malformed ledger record");
    LedgerEntry entry;
    std::string kind = j.at("record").get<std::string>();
    if (kind == "patch")
      entry.patch = patch_from_json(j);
    else if (kind == "loop_report")
      entry.report = loop_report_from_json(j);
    else
      throw std::runtime_error(path + ": line " + std::to_string(line_no) +
                               ": unknown record kind '" + kind + "'");
    entries.push_back(std::move(entry));
  }
  return entries;
}

namespace {

std::string percent1(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f%%", fraction * 100.0);
  return buf;
}

}  // namespace

std::string arrow_summary(double freeform_rate, double structured_rate,
                          std::optional<double> patched_rate) {
  std::string out = percent1(freeform_rate) + " -> " + percent1(structured_rate);
  double final_rate = structured_rate;
  if (patched_rate) {
    out += " -> " + percent1(*patched_rate);
    final_rate = *patched_rate;
  }
  if (freeform_rate > 0.0) {
    double reduction = 1.0 - final_rate / freeform_rate;
    char buf[32];
    std::snprintf(buf, sizeof(buf), " (%.0f%% cumulative)", reduction * 100.0);
    out += buf;
  }
  return out;
}

}  // namespace flipaudit
