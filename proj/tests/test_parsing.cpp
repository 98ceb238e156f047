#include "doctest.h"

#include "flipaudit/parsing.hpp"

using namespace flipaudit;

static const std::vector<std::string> kSentencing{"Diversion program", "Probation",
                                                  "Incarceration"};
static const std::vector<std::string> kInvest{"Buy", "Hold", "Sell"};

TEST_CASE("letter prefix parses a lettered recommendation") {
  DecisionRecord r = parse_decision(
      "Decision: (a) Diversion program because the offense was minor", kSentencing);
  CHECK(r.decision == 0);
  CHECK(r.parse_method == ParseMethod::LetterPrefix);
  CHECK(r.rationale == "Diversion program because the offense was minor");
}

TEST_CASE("letter prefix forms a), A. and bounds") {
  CHECK(parse_decision("b) too risky", kInvest).decision == 1);
  CHECK(parse_decision("B. too risky", kInvest).decision == 1);
  CHECK(parse_decision("(C) trim the position", kInvest).decision == 2);
  // Letters beyond the option range are not references.
  CHECK(parse_decision("(d) not an option", kInvest).decision == kUnparsed);
}

TEST_CASE("empty and unparseable text yield UNPARSED") {
  DecisionRecord r = parse_decision("", kInvest);
  CHECK(r.decision == kUnparsed);
  CHECK(r.parse_method == ParseMethod::Unparsed);

  CHECK(parse_decision("no recommendation provided", kInvest).decision == kUnparsed);
}

TEST_CASE("fuzzy tier finds a single whole-word label") {
  DecisionRecord r = parse_decision("I recommend Buy based on fundamentals", kInvest);
  CHECK(r.decision == 0);
  CHECK(r.parse_method == ParseMethod::FuzzyOption);
  CHECK(r.rationale == "based on fundamentals");
}

TEST_CASE("exact tier outranks fuzzy containment") {
  DecisionRecord r = parse_decision("Buy", kInvest);
  CHECK(r.decision == 0);
  CHECK(r.parse_method == ParseMethod::ExactLabel);
  // Entire response consumed: rationale falls back to the full text.
  CHECK(r.rationale == "Buy");

  DecisionRecord trailing = parse_decision("  hold.  ", kInvest);
  CHECK(trailing.decision == 1);
  CHECK(trailing.parse_method == ParseMethod::ExactLabel);
}

TEST_CASE("two distinct labels in the same tier abstain") {
  CHECK(parse_decision("Buy or Sell, hard to say", kInvest).decision == kUnparsed);
  CHECK(parse_decision("(a) or (b), unclear", kInvest).decision == kUnparsed);
  // A higher tier with a unique match wins even if lower tiers would tie.
  DecisionRecord r = parse_decision("(b) Hold; Buy and Sell both look wrong", kInvest);
  CHECK(r.decision == 1);
  CHECK(r.parse_method == ParseMethod::LetterPrefix);
}

TEST_CASE("repeated occurrences of one label are not a tie") {
  DecisionRecord r = parse_decision("Hold. I would hold for now.", kInvest);
  CHECK(r.decision == 1);
}

TEST_CASE("parse_decision validates options") {
  CHECK_THROWS_AS(parse_decision("text", {}), std::invalid_argument);
}

static std::vector<FeatureField> lending_fields() {
  return {{"credit_indicators", true, {"good", "fair", "poor"}},
          {"employment_stability", true, {"stable", "unstable"}},
          {"debt_to_income", true, {"low", "medium", "high"}},
          {"loan_purpose", false, {}}};
}

TEST_CASE("parse_features accepts a complete object") {
  ExtractedFeatures f = parse_features(
      R"(Here is the extraction: {"credit_indicators":"good","employment_stability":"stable","debt_to_income":"low","loan_purpose":"car"} done)",
      "lending-v1", lending_fields());
  CHECK(f.validation == FeatureValidation::Valid);
  CHECK(f.values.size() == 4);
  CHECK(f.values.at("credit_indicators") == "good");
  CHECK(f.values.at("loan_purpose") == "car");
}

TEST_CASE("parse_features normalizes categorical case") {
  ExtractedFeatures f = parse_features(
      R"({"credit_indicators":"Good","employment_stability":"STABLE","debt_to_income":"Low","loan_purpose":"x"})",
      "lending-v1", lending_fields());
  CHECK(f.validation == FeatureValidation::Valid);
  CHECK(f.values.at("credit_indicators") == "good");
}

TEST_CASE("parse_features failure modes") {
  ExtractedFeatures bad_cat = parse_features(
      R"({"credit_indicators":"excellent","employment_stability":"stable","debt_to_income":"low","loan_purpose":"x"})",
      "lending-v1", lending_fields());
  CHECK(bad_cat.validation == FeatureValidation::BadCategory);
  REQUIRE(bad_cat.problems.size() == 1);
  CHECK(bad_cat.problems[0] == "credit_indicators");

  ExtractedFeatures missing = parse_features(
      R"({"credit_indicators":"good"})", "lending-v1", lending_fields());
  CHECK(missing.validation == FeatureValidation::MissingFields);
  CHECK(missing.problems.size() == 3);

  ExtractedFeatures no_json =
      parse_features("prose with no braces at all", "lending-v1", lending_fields());
  CHECK(no_json.validation == FeatureValidation::BadJson);

  ExtractedFeatures truncated =
      parse_features(R"({"credit_indicators":"good)", "lending-v1", lending_fields());
  CHECK(truncated.validation == FeatureValidation::BadJson);
}

TEST_CASE("parse_features strips markdown fences and nested objects work") {
  ExtractedFeatures f = parse_features(
      "```json\n{\"credit_indicators\":\"fair\",\"employment_stability\":\"unstable\","
      "\"debt_to_income\":\"high\",\"loan_purpose\":\"home {repair}\"}\n```",
      "lending-v1", lending_fields());
  CHECK(f.validation == FeatureValidation::Valid);
  CHECK(f.values.at("loan_purpose") == "home {repair}");
}

TEST_CASE("record_flip classifies pairs") {
  DecisionRecord base;
  base.pair_id = "p1";
  base.decision = 0;
  DecisionRecord swap;
  swap.pair_id = "p1";
  swap.side = Side::Swap;

  swap.decision = 0;
  CHECK(record_flip(base, swap) == stats::FlipIndicator::NoFlip);
  swap.decision = 2;
  CHECK(record_flip(base, swap) == stats::FlipIndicator::Flip);
  swap.decision = kUnparsed;
  CHECK(record_flip(base, swap) == stats::FlipIndicator::Excluded);

  // Symmetric under argument swap.
  swap.decision = 2;
  CHECK(record_flip(swap, base) == stats::FlipIndicator::Flip);

  DecisionRecord other;
  other.pair_id = "p2";
  other.decision = 0;
  CHECK_THROWS_AS(record_flip(base, other), std::invalid_argument);
}
