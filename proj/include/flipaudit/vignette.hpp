#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "flipaudit/interventions.hpp"
#include "flipaudit/types.hpp"

namespace flipaudit {

// One decision scenario in base and swap forms with a forced-choice task.
struct VignettePair {
  std::string id;
  Domain domain = Domain::CriminalJustice;
  BiasType bias_type = BiasType::Demographic;
  std::string context;
  std::string base_text;
  std::string swap_text;
  std::string decision_prompt;
  std::vector<std::string> options;
  Provenance provenance = Provenance::Template;
};

// Throws std::invalid_argument naming the violated field.
void validate(const VignettePair& pair);

// Near-identical pair for the noise baseline: the variant differs from the
// base only in punctuation or a single-word synonym substitution.
struct ControlPair {
  std::string id;
  Domain domain = Domain::CriminalJustice;
  std::string base_text;
  std::string variant_text;
  std::string decision_prompt;
  std::vector<std::string> options;
  PerturbationKind perturbation_kind = PerturbationKind::Punctuation;
};

void validate(const ControlPair& pair);

using TabularCaseRecord = std::map<std::string, std::string>;

inline constexpr std::string_view kCorpusSchemaVersion = "1";

// Corpus file: one JSON record per line, preceded by a
// {"schema_version":"1"} header. A zero-line file is an empty corpus.
// Errors carry the offending line number; invariant violations name the field.
std::vector<VignettePair> load_corpus(const std::string& path,
                                      const std::string& expected_schema_version =
                                          std::string(kCorpusSchemaVersion));
void save_corpus(const std::string& path, const std::vector<VignettePair>& pairs);

std::vector<ControlPair> load_control_corpus(const std::string& path);
void save_control_corpus(const std::string& path, const std::vector<ControlPair>& pairs);

// Scenario template with {slot} placeholders in context and body.
struct VignetteTemplate {
  Domain domain = Domain::CriminalJustice;
  std::string context;
  std::string body;
  std::string decision_prompt;
  std::vector<std::string> options;
};

// Placeholder names appearing in the template, in order of first occurrence.
std::vector<std::string> template_placeholders(const VignetteTemplate& tmpl);

struct InstantiatedPair {
  VignettePair pair;
  // Spans the intervention changed, in base_text/swap_text coordinates.
  std::vector<ModifiedSpan> swap_spans;
};

// Fills every placeholder from slot_values, then produces base/swap texts
// that differ exactly in the slots the intervention targets. Unresolved
// placeholders and interventions that target no slot are errors.
InstantiatedPair instantiate_template(const VignetteTemplate& tmpl,
                                      const std::map<std::string, std::string>& slot_values,
                                      const InterventionSpec& intervention,
                                      const std::string& id);

// Tabular input: comma-separated values with a header row.
std::vector<TabularCaseRecord> load_tabular_csv(const std::string& path);

struct DeriveResult {
  std::vector<VignettePair> pairs;
  std::vector<std::string> warnings;           // skipped records
  std::map<BiasType, std::int64_t> shortfall;  // requested minus produced
};

// Derives vignette pairs from case records: deterministic shuffle by seed,
// take-first until each bias type's count is filled. Records missing a
// referenced field are skipped with a warning. Template placeholders resolve
// from the record first, then from the intervention pools (targeted slot
// cycles through base_pool entries; other interventions' slots pin to their
// first base_pool entry).
DeriveResult derive_from_tabular(const std::vector<TabularCaseRecord>& records,
                                 const VignetteTemplate& tmpl,
                                 const std::vector<InterventionSpec>& interventions,
                                 const std::map<BiasType, std::int64_t>& count_per_bias,
                                 std::uint64_t seed);

}  // namespace flipaudit
