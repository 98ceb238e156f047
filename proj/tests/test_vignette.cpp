#include "doctest.h"

#include <cstdio>
#include <fstream>
#include <random>

#include "flipaudit/vignette.hpp"

using namespace flipaudit;

namespace {

VignettePair sample_pair(int serial) {
  VignettePair p;
  p.id = "criminal_justice-demographic-" + std::to_string(serial);
  p.domain = Domain::CriminalJustice;
  p.bias_type = BiasType::Demographic;
  p.context = "Sentencing review.";
  p.base_text = "James Smith, a 28-year-old first-time offender, case " +
                std::to_string(serial) + ".";
  p.swap_text = "Jamal Washington, a 28-year-old first-time offender, case " +
                std::to_string(serial) + ".";
  p.decision_prompt = "Recommend sentencing:";
  p.options = {"Diversion program", "Probation", "Incarceration"};
  p.provenance = Provenance::Template;
  return p;
}

std::string temp_path(const std::string& name) {
  return "/tmp/flipaudit_test_" + name;
}

}  // namespace

TEST_CASE("empty file loads as an empty corpus") {
  std::string path = temp_path("empty.jsonl");
  std::ofstream(path).close();
  auto pairs = load_corpus(path);
  CHECK(pairs.empty());
}

TEST_CASE("corpus save/load round trip is identity") {
  std::vector<VignettePair> corpus;
  for (int i = 0; i < 25; ++i) corpus.push_back(sample_pair(i));
  std::string path = temp_path("roundtrip.jsonl");
  save_corpus(path, corpus);
  auto loaded = load_corpus(path);
  REQUIRE(loaded.size() == corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    CHECK(loaded[i].id == corpus[i].id);
    CHECK(loaded[i].domain == corpus[i].domain);
    CHECK(loaded[i].bias_type == corpus[i].bias_type);
    CHECK(loaded[i].context == corpus[i].context);
    CHECK(loaded[i].base_text == corpus[i].base_text);
    CHECK(loaded[i].swap_text == corpus[i].swap_text);
    CHECK(loaded[i].decision_prompt == corpus[i].decision_prompt);
    CHECK(loaded[i].options == corpus[i].options);
    CHECK(loaded[i].provenance == corpus[i].provenance);
  }
}

TEST_CASE("single valid record loads with its bias type") {
  std::string path = temp_path("single.jsonl");
  save_corpus(path, {sample_pair(0)});
  auto pairs = load_corpus(path);
  REQUIRE(pairs.size() == 1);
  CHECK(pairs[0].bias_type == BiasType::Demographic);
  CHECK(pairs[0].base_text.find("James Smith") != std::string::npos);
  CHECK(pairs[0].swap_text.find("Jamal Washington") != std::string::npos);
}

TEST_CASE("corpus loader reports line numbers and field names") {
  std::string path = temp_path("bad.jsonl");
  {
    std::ofstream out(path);
    out << R"({"schema_version":"1"})" << "\n";
    out << "not json at all\n";
  }
  CHECK_THROWS_WITH_AS(load_corpus(path), doctest::Contains("line 2"),
                       std::runtime_error);

  // Single-option list violates the options invariant, named in the error.
  {
    std::ofstream out(path);
    out << R"({"schema_version":"1"})" << "\n";
    VignettePair p = sample_pair(0);
    out << R"({"id":"x","domain":"lending","bias_type":"demographic","context":"",)"
        << R"("base_text":"a","swap_text":"b","decision_prompt":"d",)"
        << R"("options":["approve"],"provenance":"template"})" << "\n";
  }
  CHECK_THROWS_WITH_AS(load_corpus(path), doctest::Contains("options"),
                       std::runtime_error);
}

TEST_CASE("schema version mismatch is an error") {
  std::string path = temp_path("version.jsonl");
  {
    std::ofstream out(path);
    out << R"({"schema_version":"99"})" << "\n";
  }
  CHECK_THROWS_WITH_AS(load_corpus(path), doctest::Contains("schema_version"),
                       std::runtime_error);
}

TEST_CASE("pair validation catches invariant violations") {
  VignettePair dup = sample_pair(0);
  dup.options = {"Buy", "Buy"};
  CHECK_THROWS_WITH_AS(validate(dup), doctest::Contains("duplicates"),
                       std::invalid_argument);

  VignettePair same = sample_pair(0);
  same.swap_text = same.base_text;
  CHECK_THROWS_AS(validate(same), std::invalid_argument);

  // Control provenance allows equality of the sides it never uses.
  same.provenance = Provenance::Control;
  CHECK_NOTHROW(validate(same));
}

namespace {

InterventionSpec name_swap() {
  InterventionSpec spec;
  spec.bias_type = BiasType::Demographic;
  spec.name = "name";
  spec.target_markers = {"name"};
  spec.base_pool = {"James Smith", "Emily Baker"};
  spec.swap_pool = {"Jamal Washington", "Lakisha Johnson"};
  return spec;
}

VignetteTemplate hiring_template() {
  VignetteTemplate t;
  t.domain = Domain::Hiring;
  t.context = "Requisition {req}.";
  t.body = "Candidate {name} applied for the {role} role. Skills: {skills}.";
  t.decision_prompt = "Advance?";
  t.options = {"Recommend for interview", "Do not recommend"};
  return t;
}

}  // namespace

TEST_CASE("template instantiation swaps only the targeted slot") {
  InstantiatedPair inst = instantiate_template(
      hiring_template(),
      {{"name", "James Smith"}, {"role", "analyst"}, {"skills", "strong"}, {"req", "7"}},
      name_swap(), "hiring-demographic-0");
  CHECK(inst.pair.base_text ==
        "Candidate James Smith applied for the analyst role. Skills: strong.");
  CHECK(inst.pair.swap_text ==
        "Candidate Jamal Washington applied for the analyst role. Skills: strong.");
  CHECK(inst.pair.context == "Requisition 7.");
  CHECK(inst.pair.bias_type == BiasType::Demographic);
  REQUIRE(inst.swap_spans.size() == 1);
  CHECK(inst.swap_spans[0].old_text == "James Smith");
  CHECK(inst.swap_spans[0].new_text == "Jamal Washington");

  // The diff between the sides is confined to the recorded spans.
  const auto& span = inst.swap_spans[0];
  CHECK(inst.pair.base_text.substr(0, span.before.begin) ==
        inst.pair.swap_text.substr(0, span.after.begin));
  CHECK(inst.pair.base_text.substr(span.before.end()) ==
        inst.pair.swap_text.substr(span.after.end()));
}

TEST_CASE("template instantiation error paths") {
  // Unresolved placeholder.
  CHECK_THROWS_WITH_AS(
      instantiate_template(hiring_template(),
                           {{"name", "James Smith"}, {"role", "analyst"}, {"req", "7"}},
                           name_swap(), "id"),
      doctest::Contains("skills"), std::invalid_argument);

  // Intervention that targets no slot of this template.
  VignetteTemplate no_slots = hiring_template();
  no_slots.body = "Fixed text with {role} and {skills} only.";
  CHECK_THROWS_WITH_AS(
      instantiate_template(no_slots,
                           {{"role", "analyst"}, {"skills", "strong"}, {"req", "7"}},
                           name_swap(), "id"),
      doctest::Contains("targets no slot"), std::invalid_argument);

  // Slot value outside the intervention pools.
  CHECK_THROWS_AS(
      instantiate_template(
          hiring_template(),
          {{"name", "Nobody Known"}, {"role", "analyst"}, {"skills", "strong"}, {"req", "7"}},
          name_swap(), "id"),
      std::invalid_argument);
}

TEST_CASE("template placeholders are reported in order") {
  auto names = template_placeholders(hiring_template());
  CHECK(names == std::vector<std::string>{"req", "name", "role", "skills"});
}

TEST_CASE("csv loader handles quoting and header") {
  std::string path = temp_path("cases.csv");
  {
    std::ofstream out(path);
    out << "charge,priors_count,age\n";
    out << "\"possession, controlled substance\",0,28\n";
    out << "theft,3,41\n";
  }
  auto records = load_tabular_csv(path);
  REQUIRE(records.size() == 2);
  CHECK(records[0].at("charge") == "possession, controlled substance");
  CHECK(records[0].at("priors_count") == "0");
  CHECK(records[1].at("age") == "41");
}

namespace {

VignetteTemplate tabular_template() {
  VignetteTemplate t;
  t.domain = Domain::CriminalJustice;
  t.context = "";
  t.body = "{name}, a {age}-year-old defendant, was charged with {charge}. "
           "Prior offenses: {priors_count}. {framing}";
  t.decision_prompt = "Recommend sentencing:";
  t.options = {"Diversion program", "Probation", "Incarceration"};
  return t;
}

std::vector<InterventionSpec> tabular_interventions() {
  InterventionSpec names = name_swap();
  InterventionSpec framing;
  framing.bias_type = BiasType::Framing;
  framing.name = "framing";
  framing.target_markers = {"framing"};
  framing.base_pool = {"The defendant complied in 9 of 10 check-ins."};
  framing.swap_pool = {"The defendant missed 1 of 10 check-ins."};
  return {names, framing};
}

std::vector<TabularCaseRecord> tabular_records(int n) {
  std::vector<TabularCaseRecord> records;
  for (int i = 0; i < n; ++i) {
    records.push_back({{"charge", "charge-" + std::to_string(i)},
                       {"priors_count", std::to_string(i % 5)},
                       {"age", std::to_string(20 + i % 30)}});
  }
  return records;
}

}  // namespace

TEST_CASE("tabular derivation honors per-bias counts") {
  auto result = derive_from_tabular(tabular_records(250), tabular_template(),
                                    tabular_interventions(),
                                    {{BiasType::Demographic, 200}, {BiasType::Framing, 50}},
                                    12345);
  CHECK(result.pairs.size() == 250);
  CHECK(result.shortfall.empty());
  std::int64_t demographic = 0, framing = 0;
  for (const auto& p : result.pairs) {
    CHECK(p.provenance == Provenance::Tabular);
    if (p.bias_type == BiasType::Demographic) ++demographic;
    if (p.bias_type == BiasType::Framing) ++framing;
  }
  CHECK(demographic == 200);
  CHECK(framing == 50);
}

TEST_CASE("tabular derivation is deterministic given the seed") {
  auto a = derive_from_tabular(tabular_records(40), tabular_template(),
                               tabular_interventions(), {{BiasType::Demographic, 20}}, 7);
  auto b = derive_from_tabular(tabular_records(40), tabular_template(),
                               tabular_interventions(), {{BiasType::Demographic, 20}}, 7);
  REQUIRE(a.pairs.size() == b.pairs.size());
  for (std::size_t i = 0; i < a.pairs.size(); ++i) {
    CHECK(a.pairs[i].base_text == b.pairs[i].base_text);
    CHECK(a.pairs[i].swap_text == b.pairs[i].swap_text);
    CHECK(a.pairs[i].id == b.pairs[i].id);
  }
  auto c = derive_from_tabular(tabular_records(40), tabular_template(),
                               tabular_interventions(), {{BiasType::Demographic, 20}}, 8);
  bool any_difference = false;
  for (std::size_t i = 0; i < a.pairs.size(); ++i)
    if (a.pairs[i].base_text != c.pairs[i].base_text) any_difference = true;
  CHECK(any_difference);
}

TEST_CASE("tabular derivation skips deficient records with warnings") {
  auto records = tabular_records(10);
  records[3].erase("charge");
  records[7]["priors_count"] = "  ";
  auto result = derive_from_tabular(records, tabular_template(), tabular_interventions(),
                                    {{BiasType::Demographic, 10}}, 1);
  CHECK(result.pairs.size() == 8);
  CHECK(result.warnings.size() == 2);
  CHECK(result.shortfall.at(BiasType::Demographic) == 2);
}

TEST_CASE("tabular derivation of an empty record set is empty") {
  auto result = derive_from_tabular({}, tabular_template(), tabular_interventions(),
                                    {{BiasType::Demographic, 10}}, 1);
  CHECK(result.pairs.empty());
}
