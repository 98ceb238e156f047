#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "flipaudit/gateway.hpp"
#include "flipaudit/parsing.hpp"

namespace flipaudit {

// One scoring rule: categorical field equals `equals` → add `increment`.
struct RubricRule {
  std::string field;
  std::string equals;
  int increment = 0;
};

// Maps score ranges to option labels for tasks with more than two options.
// Bands are sorted by descending min_score; the first band whose min_score
// the score reaches wins.
struct ScoreBand {
  int min_score = 0;
  std::string option;
};

// Extraction schema plus deterministic scoring rules for one domain.
struct RubricSpec {
  std::string schema_id;
  Domain domain = Domain::Lending;
  std::vector<FeatureField> fields;
  std::vector<RubricRule> rules;
  int threshold = 0;
  std::string approve_option;
  std::string deny_option;
  std::vector<ScoreBand> bands;  // empty → binary approve/deny
  std::string extraction_prompt;
  int prompt_version = 1;
};

// Invariants: every rule references a declared categorical field and a member
// of its closed set; the threshold is reachable; bands (when present) start
// at the threshold and descend to the minimum reachable score.
void validate(const RubricSpec& rubric);

RubricSpec rubric_from_json(const nlohmann::json& j);
nlohmann::json rubric_to_json(const RubricSpec& rubric);
RubricSpec load_rubric(const std::string& path);
void save_rubric(const std::string& path, const RubricSpec& rubric);

struct RubricDecision {
  std::string pair_id;
  Side side = Side::Base;
  int score = 0;
  std::string decision;
  std::vector<std::string> contributing_rules;  // "field=value:+n"
};

// Deterministic scoring: sum of matched rule increments, thresholded (or
// banded) into an option label. Free-text fields never affect the score.
// Requires valid features with a matching schema_id.
RubricDecision decide(const ExtractedFeatures& features, const RubricSpec& rubric);

struct DecisionTableRow {
  std::map<std::string, std::string> values;  // categorical fields only
  int score = 0;
  std::string decision;
};

// Full decision table over the cartesian product of the categorical closed
// sets. Throws when the product exceeds `cap`.
std::vector<DecisionTableRow> enumerate_rubric(const RubricSpec& rubric,
                                               std::size_t cap = 100000);

void write_decision_table_csv(std::ostream& os, const RubricSpec& rubric,
                              const std::vector<DecisionTableRow>& table);

struct StructuredOutcome {
  std::string pair_id;
  Domain domain = Domain::Lending;
  BiasType bias_type = BiasType::Demographic;
  ExtractedFeatures base_features;
  ExtractedFeatures swap_features;
  std::optional<RubricDecision> base_decision;
  std::optional<RubricDecision> swap_decision;
  stats::FlipIndicator indicator = stats::FlipIndicator::Excluded;
};

struct RunStructuredResult {
  std::vector<StructuredOutcome> outcomes;
  std::vector<PairFailure> failures;
};

// Extract → parse → decide, independently per side. Flip compares decision
// labels; invalid extractions exclude the pair.
RunStructuredResult run_structured(const std::vector<VignettePair>& pairs,
                                   ModelGateway& gateway, const RubricSpec& rubric,
                                   int parallelism = 1);

// Extraction prompt for one side of a pair (shared with the audit loop).
std::string render_extraction_prompt(const RubricSpec& rubric, const VignettePair& pair,
                                     Side side);

}  // namespace flipaudit
