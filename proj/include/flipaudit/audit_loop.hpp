#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "flipaudit/rubric.hpp"

namespace flipaudit {

struct FieldDiff {
  std::string field;
  std::string base_value;
  std::string swap_value;
};

// Field-level account of one structured flip.
struct FlipDiagnosis {
  std::string pair_id;
  BiasType bias_type = BiasType::Demographic;
  std::vector<FieldDiff> differing_fields;
  // Rules whose match status changed between the sides ("field=value:+n").
  std::vector<std::string> rule_impact;
  // Fields whose one-at-a-time revert flips the swap decision back.
  std::vector<std::string> decisive_fields;
  // Differing fields but no rule impact: band boundary or free-text issue.
  bool rubric_only = false;
};

struct DiagnoseResult {
  std::vector<FlipDiagnosis> diagnoses;
  // Flip-attribution count per field; a field counts once per flip.
  std::map<std::string, std::int64_t> field_leak_counts;
  std::vector<std::string> extraction_failures;  // pair ids not diagnosable
};

// Diagnoses every flip in `outcomes` (non-flips are ignored) by diffing the
// extracted features and re-running the rubric with each differing field
// reverted one at a time. Pure rubric re-runs — no model calls.
DiagnoseResult diagnose(const std::vector<StructuredOutcome>& outcomes,
                        const RubricSpec& rubric);

enum class PatchAuthor { Human, Templated };

std::string to_string(PatchAuthor a);
PatchAuthor patch_author_from_string(std::string_view s);

struct PatchRecord {
  std::string schema_id;
  int prompt_version_from = 1;
  int prompt_version_to = 2;
  std::vector<std::string> targeted_fields;
  std::string patch_text;
  PatchAuthor author = PatchAuthor::Human;
  std::string timestamp;  // ISO 8601 UTC
};

nlohmann::json patch_to_json(const PatchRecord& patch);
PatchRecord patch_from_json(const nlohmann::json& j);

// Templated patch text: "When extracting {fields}, ignore {markers}; use
// {evidence} only."
PatchRecord make_templated_patch(const RubricSpec& rubric,
                                 const std::vector<std::string>& targeted_fields,
                                 const std::string& bias_markers,
                                 const std::string& relevant_evidence);

PatchRecord make_human_patch(const RubricSpec& rubric,
                             const std::vector<std::string>& targeted_fields,
                             const std::string& patch_text);

// New rubric with the patch text appended to the extraction prompt and the
// version bumped. The input rubric is untouched. Throws on version mismatch
// or fields outside the schema.
RubricSpec apply_patch(const RubricSpec& rubric, const PatchRecord& patch);

struct LoopReport {
  int iteration = 1;
  std::string schema_id;
  int rubric_version_before = 1;
  int rubric_version_after = 1;
  std::int64_t before_n = 0, before_k = 0;
  std::int64_t after_n = 0, after_k = 0;
  double rate_before = 0.0;
  double rate_after = 0.0;
  std::map<std::string, std::int64_t> leaks_before;
  std::map<std::string, std::int64_t> leaks_after;
  std::optional<double> freeform_rate;
  // 1 - rate_after / freeform_rate, when the free-form rate is known and > 0.
  std::optional<double> cumulative_reduction;
};

nlohmann::json loop_report_to_json(const LoopReport& report);
LoopReport loop_report_from_json(const nlohmann::json& j);

struct VerifyOptions {
  std::optional<double> freeform_rate;
  int iteration = 1;
  int parallelism = 1;
};

// Runs the pair set under both rubrics (the before-run is free when cached)
// and reports flip rates, per-field leaks and cumulative reduction.
LoopReport verify(const std::vector<VignettePair>& pairs, ModelGateway& gateway,
                  const RubricSpec& rubric_before, const RubricSpec& rubric_after,
                  const VerifyOptions& options = {});

// Append-only loop ledger: one JSON record per line, type-tagged.
void append_ledger(const std::string& path, const PatchRecord& patch);
void append_ledger(const std::string& path, const LoopReport& report);

struct LedgerEntry {
  std::optional<PatchRecord> patch;
  std::optional<LoopReport> report;
};

std::vector<LedgerEntry> load_ledger(const std::string& path);

// "6.0% -> 1.7% -> 1.3% (78% cumulative)" given rates as fractions.
std::string arrow_summary(double freeform_rate, double structured_rate,
                          std::optional<double> patched_rate);

}  // namespace flipaudit
