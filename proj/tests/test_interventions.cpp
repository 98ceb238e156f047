#include "doctest.h"

#include <stdexcept>

#include "flipaudit/controls.hpp"
#include "flipaudit/interventions.hpp"
#include "support/oracles.hpp"

using namespace flipaudit;

static InterventionSpec authority_spec() {
  InterventionSpec spec;
  spec.bias_type = BiasType::Authority;
  spec.name = "source";
  spec.target_markers = {"A Harvard Medical School study"};
  spec.base_pool = {"A Harvard Medical School study"};
  spec.swap_pool = {"A community college study"};
  return spec;
}

TEST_CASE("authority swap replaces the credential span") {
  std::string text = "A Harvard Medical School study found the treatment effective.";
  InterventionResult r = apply_intervention(text, authority_spec());
  CHECK(r.text == "A community college study found the treatment effective.");
  REQUIRE(r.spans.size() == 1);
  CHECK(r.spans[0].old_text == "A Harvard Medical School study");
  CHECK(r.spans[0].new_text == "A community college study");
  CHECK(r.spans[0].before.begin == 0);
}

TEST_CASE("framing swap replaces the full phrasing") {
  InterventionSpec spec;
  spec.bias_type = BiasType::Framing;
  spec.name = "framing";
  spec.target_markers = {"95% of patients survived the procedure"};
  spec.base_pool = {"95% of patients survived the procedure"};
  spec.swap_pool = {"5% of patients died during the procedure"};
  InterventionResult r = apply_intervention(
      "Note: 95% of patients survived the procedure overall.", spec);
  CHECK(r.text == "Note: 5% of patients died during the procedure overall.");
}

TEST_CASE("output differs only inside the returned spans") {
  InterventionSpec spec;
  spec.bias_type = BiasType::Demographic;
  spec.name = "name";
  spec.target_markers = {"name"};
  spec.base_pool = {"James Smith", "Emily Baker"};
  spec.swap_pool = {"Jamal Washington", "Lakisha Johnson"};
  std::string text = "James Smith met Emily Baker. James Smith left.";
  InterventionResult r =
      apply_intervention(text, spec, {{"name", "James Smith"}});
  CHECK(r.text == "Jamal Washington met Emily Baker. Jamal Washington left.");
  REQUIRE(r.spans.size() == 2);

  // Rebuild the output from the input using only the spans.
  std::string rebuilt = text;
  for (auto it = r.spans.rbegin(); it != r.spans.rend(); ++it)
    rebuilt.replace(it->before.begin, it->before.length, it->new_text);
  CHECK(rebuilt == r.text);
}

TEST_CASE("indexed pairing swaps in both directions") {
  InterventionSpec spec;
  spec.bias_type = BiasType::Demographic;
  spec.name = "name";
  spec.target_markers = {"x"};
  spec.base_pool = {"James Smith"};
  spec.swap_pool = {"Jamal Washington"};
  CHECK(paired_replacement(spec, "James Smith") == "Jamal Washington");
  CHECK(paired_replacement(spec, "Jamal Washington") == "James Smith");
  CHECK_THROWS_AS(paired_replacement(spec, "Unknown Person"), std::invalid_argument);
}

TEST_CASE("re-deriving spans on swapped text finds the swapped-in values") {
  InterventionSpec spec;
  spec.bias_type = BiasType::Demographic;
  spec.name = "name";
  spec.target_markers = {"name"};
  spec.base_pool = {"James Smith"};
  spec.swap_pool = {"Jamal Washington"};
  std::string text = "Candidate James Smith applied.";
  InterventionResult r = apply_intervention(text, spec, {{"name", "James Smith"}});
  auto located = locate_pool_entries(r.text, spec.swap_pool);
  REQUIRE(located.size() == r.spans.size());
  for (std::size_t i = 0; i < located.size(); ++i) {
    CHECK(located[i].first == r.spans[i].new_text);
    CHECK(located[i].second.begin == r.spans[i].after.begin);
  }
}

TEST_CASE("intervention errors") {
  InterventionSpec empty_markers = authority_spec();
  empty_markers.target_markers.clear();
  CHECK_THROWS_AS(apply_intervention("any text", empty_markers), std::invalid_argument);

  InterventionSpec spec = authority_spec();
  CHECK_THROWS_WITH_AS(apply_intervention("no such marker here", spec),
                       doctest::Contains("A Harvard Medical School study"),
                       std::invalid_argument);

  InterventionSpec unequal = authority_spec();
  unequal.swap_pool.push_back("extra");
  CHECK_THROWS_AS(apply_intervention("A Harvard Medical School study", unequal),
                  std::invalid_argument);

  InterventionSpec empty_pool = authority_spec();
  empty_pool.base_pool.clear();
  CHECK_THROWS_AS(validate(empty_pool), std::invalid_argument);
}

TEST_CASE("swap pool files round trip") {
  std::vector<InterventionSpec> specs = load_swap_pools(
      std::string(FLIPAUDIT_SOURCE_DIR) + "/data/swap_pools.jsonl");
  REQUIRE(specs.size() == 3);
  const InterventionSpec* names = nullptr;
  for (const auto& s : specs)
    if (s.bias_type == BiasType::Demographic) names = &s;
  REQUIRE(names != nullptr);
  CHECK(names->name == "name");
  CHECK(names->base_pool.front() == "James Smith");
  CHECK(names->swap_pool.front() == "Jamal Washington");

  std::string tmp = "/tmp/flipaudit_pools_roundtrip.jsonl";
  save_swap_pools(tmp, specs);
  auto reloaded = load_swap_pools(tmp);
  REQUIRE(reloaded.size() == specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i) {
    CHECK(reloaded[i].base_pool == specs[i].base_pool);
    CHECK(reloaded[i].swap_pool == specs[i].swap_pool);
  }
}

static VignettePair small_pair() {
  VignettePair p;
  p.id = "t-1";
  p.domain = Domain::Healthcare;
  p.bias_type = BiasType::Authority;
  p.base_text = "Chart reviewed. A Harvard Medical School study backs the treatment. Proceed?";
  p.swap_text = "Chart reviewed. A community college study backs the treatment. Proceed?";
  p.decision_prompt = "Decide:";
  p.options = {"Treat", "Defer"};
  return p;
}

TEST_CASE("generate_controls confines substitutions to the targeted region") {
  std::vector<std::string> vocab{"maple", "lantern", "copper", "violet", "meadow",
                                 "harbor", "pebble", "crimson"};
  VignettePair pair = small_pair();
  auto controls = generate_controls(pair, 20, vocab, 42);
  REQUIRE(controls.size() == 20);

  TextSpan region = targeted_region(pair);
  for (const auto& c : controls) {
    CHECK(c.region.begin == region.begin);
    CHECK(c.region.length == region.length);
    // Outside the region the text is byte-identical.
    CHECK(c.perturbed_text.substr(0, region.begin) ==
          pair.base_text.substr(0, region.begin));
    CHECK(c.perturbed_text.substr(c.perturbed_text.size() -
                                  (pair.base_text.size() - region.end())) ==
          pair.base_text.substr(region.end()));
    CHECK(c.perturbed_text != pair.base_text);
  }
}

TEST_CASE("generate_controls preserves token counts (independent tokenizer)") {
  std::vector<std::string> vocab{"maple",  "lantern", "copper", "violet",
                                 "meadow", "harbor",  "pebble", "crimson"};
  VignettePair pair = small_pair();
  TextSpan region = targeted_region(pair);
  std::size_t region_tokens = oracles::whitespace_token_count(
      pair.base_text.substr(region.begin, region.length));

  for (const auto& c : generate_controls(pair, 5, vocab, 7)) {
    std::string perturbed_region = c.perturbed_text.substr(
        region.begin, c.perturbed_text.size() - (pair.base_text.size() - region.end()) -
                          region.begin);
    CHECK(oracles::whitespace_token_count(perturbed_region) == region_tokens);
    // Full-text token count is unchanged too.
    CHECK(oracles::whitespace_token_count(c.perturbed_text) ==
          oracles::whitespace_token_count(pair.base_text));
  }
}

TEST_CASE("generate_controls is deterministic and per-variant independent") {
  std::vector<std::string> vocab{"maple", "lantern", "copper", "violet", "meadow",
                                 "harbor", "pebble", "crimson"};
  VignettePair pair = small_pair();
  auto a = generate_controls(pair, 3, vocab, 99);
  auto b = generate_controls(pair, 3, vocab, 99);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(a[i].perturbed_text == b[i].perturbed_text);

  // Same (seed, pair, variant) stream regardless of m.
  auto wider = generate_controls(pair, 10, vocab, 99);
  CHECK(wider[0].perturbed_text == a[0].perturbed_text);
  CHECK(wider[2].perturbed_text == a[2].perturbed_text);
}

TEST_CASE("generate_controls error paths") {
  VignettePair pair = small_pair();
  std::vector<std::string> vocab{"maple", "lantern", "copper", "violet", "meadow"};
  CHECK_THROWS_AS(generate_controls(pair, 0, vocab, 1), std::invalid_argument);
  CHECK_THROWS_AS(generate_controls(pair, 1, {}, 1), std::invalid_argument);

  VignettePair identical = pair;
  identical.swap_text = identical.base_text;
  CHECK_THROWS_AS(generate_controls(identical, 1, vocab, 1), std::invalid_argument);

  // Vocabulary smaller than the region token count cannot sample without
  // replacement.
  CHECK_THROWS_AS(generate_controls(pair, 1, {"maple"}, 1), std::invalid_argument);
}

TEST_CASE("filter_vocabulary drops pool words") {
  InterventionSpec spec = authority_spec();
  auto kept = filter_vocabulary({"maple", "harvard", "study", "lantern"}, {spec});
  CHECK(kept == std::vector<std::string>{"maple", "lantern"});
}

static std::vector<VignettePair> tiny_corpus() {
  std::vector<VignettePair> corpus;
  for (int i = 0; i < 4; ++i) {
    VignettePair p = small_pair();
    p.id = "hc-" + std::to_string(i);
    p.base_text = "Patient presents with stable vitals, case " + std::to_string(i) +
                  ". A Harvard Medical School study backs treatment.";
    p.swap_text = "Patient presents with stable vitals, case " + std::to_string(i) +
                  ". A community college study backs treatment.";
    corpus.push_back(p);
  }
  return corpus;
}

TEST_CASE("noise controls honor per-domain counts and invariants") {
  auto corpus = tiny_corpus();
  std::vector<std::pair<std::string, std::string>> synonyms{
      {"presents", "arrives"}, {"stable", "steady"}};
  auto controls = generate_noise_controls(corpus, 6, synonyms, 5);
  CHECK(controls.size() == 6);  // one domain in corpus
  bool saw_synonym = false;
  bool saw_punct = false;
  for (const auto& c : controls) {
    validate(c);  // re-checks the single-edit invariants
    CHECK(c.domain == Domain::Healthcare);
    if (c.perturbation_kind == PerturbationKind::Synonym) saw_synonym = true;
    if (c.perturbation_kind == PerturbationKind::Punctuation) saw_punct = true;
  }
  CHECK(saw_synonym);
  CHECK(saw_punct);

  CHECK(generate_noise_controls(corpus, 0, synonyms, 5).empty());
  CHECK_THROWS_AS(generate_noise_controls(corpus, 2, {}, 5), std::invalid_argument);
  CHECK_THROWS_WITH_AS(
      generate_noise_controls(corpus, 2, synonyms, 5,
                              std::vector<Domain>{Domain::Finance}),
      doctest::Contains("finance"), std::invalid_argument);
}

TEST_CASE("synonym controls swap exactly one word") {
  auto corpus = tiny_corpus();
  std::vector<std::pair<std::string, std::string>> synonyms{{"presents", "arrives"}};
  auto controls = generate_noise_controls(corpus, 10, synonyms, 21);
  for (const auto& c : controls) {
    if (c.perturbation_kind != PerturbationKind::Synonym) continue;
    CHECK(c.variant_text.find("arrives") != std::string::npos);
    CHECK(oracles::whitespace_token_count(c.variant_text) ==
          oracles::whitespace_token_count(c.base_text));
  }
}
