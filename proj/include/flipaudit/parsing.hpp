#pragma once

#include <map>
#include <string>
#include <vector>

#include "flipaudit/stats.hpp"
#include "flipaudit/types.hpp"

namespace flipaudit {

enum class Side { Base, Swap };

std::string to_string(Side s);
Side side_from_string(std::string_view s);

enum class ParseMethod { ExactLabel, LetterPrefix, FuzzyOption, Unparsed };

std::string to_string(ParseMethod m);
ParseMethod parse_method_from_string(std::string_view s);

// Sentinel decision index for responses no tier could parse.
inline constexpr int kUnparsed = -1;

struct DecisionRecord {
  std::string pair_id;
  Side side = Side::Base;
  int decision = kUnparsed;  // option index, or kUnparsed
  ParseMethod parse_method = ParseMethod::Unparsed;
  std::string rationale;
  std::string raw_text;
};

// Tiered forced-choice extraction. Tiers, in order: exact label equality,
// option-letter prefix ("(a)", "a)", "A."), case-insensitive whole-word label
// containment. The first tier with exactly one candidate wins; a tier with
// two or more distinct candidates aborts to UNPARSED rather than guessing.
// The rationale is everything after the matched span (the full text when the
// match consumes the response).
DecisionRecord parse_decision(const std::string& raw_text,
                              const std::vector<std::string>& options);

// Extraction schema field, shared with the rubric machinery.
struct FeatureField {
  std::string name;
  bool categorical = true;
  std::vector<std::string> allowed;  // closed set; empty for free-text fields
};

enum class FeatureValidation { Valid, MissingFields, BadCategory, BadJson };

std::string to_string(FeatureValidation v);
FeatureValidation feature_validation_from_string(std::string_view s);

struct ExtractedFeatures {
  std::string pair_id;
  Side side = Side::Base;
  std::string schema_id;
  std::map<std::string, std::string> values;
  FeatureValidation validation = FeatureValidation::BadJson;
  std::vector<std::string> problems;  // offending field names
};

// Locates the first balanced-brace JSON object in the text (markdown code
// fences stripped first) and validates it against the schema fields.
// Categorical matching is case-insensitive; stored values use the schema's
// canonical spelling. Failure modes are encoded in `validation`, never thrown.
ExtractedFeatures parse_features(const std::string& raw_text,
                                 const std::string& schema_id,
                                 const std::vector<FeatureField>& fields);

// Flip indicator for one pair: excluded when either side is unparsed,
// flip when both parsed and the indices differ. Throws on mismatched ids.
stats::FlipIndicator record_flip(const DecisionRecord& base,
                                 const DecisionRecord& swap);

}  // namespace flipaudit
