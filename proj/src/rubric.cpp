#include "flipaudit/rubric.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include "flipaudit/text.hpp"

namespace flipaudit {

using nlohmann::json;

void validate(const RubricSpec& rubric) {
  if (rubric.schema_id.empty()) throw std::invalid_argument("rubric: schema_id required");
  if (rubric.fields.empty())
    throw std::invalid_argument("rubric '" + rubric.schema_id + "': no fields declared");
  if (rubric.prompt_version < 1)
    throw std::invalid_argument("rubric '" + rubric.schema_id +
                                "': prompt_version must be >= 1");

  auto field_of = [&](const std::string& name) -> const FeatureField* {
    for (const auto& f : rubric.fields)
      if (f.name == name) return &f;
    return nullptr;
  };

  int positive_sum = 0;
  int negative_sum = 0;
  for (const auto& rule : rubric.rules) {
    const FeatureField* f = field_of(rule.field);
    if (f == nullptr)
      throw std::invalid_argument("rubric '" + rubric.schema_id + "': rule references undeclared field '" +
                                  rule.field + "'");
    if (!f->categorical)
      throw std::invalid_argument("rubric '" + rubric.schema_id + "': rule references free-text field '" +
                                  rule.field + "'");
    if (std::find(f->allowed.begin(), f->allowed.end(), rule.equals) == f->allowed.end())
      throw std::invalid_argument("rubric '" + rubric.schema_id + "': rule value '" + rule.equals +
                                  "' not in closed set of field '" + rule.field + "'");
    if (rule.increment > 0) positive_sum += rule.increment;
    if (rule.increment < 0) negative_sum += rule.increment;
  }
  if (positive_sum < rubric.threshold)
    throw std::invalid_argument("rubric '" + rubric.schema_id +
                                "': threshold unreachable (max positive score " +
                                std::to_string(positive_sum) + " < threshold " +
                                std::to_string(rubric.threshold) + ")");

  if (rubric.bands.empty()) {
    if (rubric.approve_option.empty() || rubric.deny_option.empty())
      throw std::invalid_argument("rubric '" + rubric.schema_id +
                                  "': approve_option and deny_option required");
    if (rubric.approve_option == rubric.deny_option)
      throw std::invalid_argument("rubric '" + rubric.schema_id +
                                  "': approve_option equals deny_option");
  } else {
    if (rubric.bands.front().min_score != rubric.threshold)
      throw std::invalid_argument("rubric '" + rubric.schema_id +
                                  "': top band must start at the threshold");
    for (std::size_t i = 1; i < rubric.bands.size(); ++i) {
      if (rubric.bands[i].min_score >= rubric.bands[i - 1].min_score)
        throw std::invalid_argument("rubric '" + rubric.schema_id +
                                    "': bands must strictly descend");
    }
    if (rubric.bands.back().min_score > negative_sum)
      throw std::invalid_argument("rubric '" + rubric.schema_id +
                                  "': bottom band min_score " +
                                  std::to_string(rubric.bands.back().min_score) +
                                  " above minimum reachable score " +
                                  std::to_string(negative_sum));
    if (!rubric.approve_option.empty() &&
        rubric.approve_option != rubric.bands.front().option)
      throw std::invalid_argument("rubric '" + rubric.schema_id +
                                  "': approve_option must match the top band");
  }
}

RubricSpec rubric_from_json(const json& j) {
  RubricSpec r;
  r.schema_id = j.at("schema_id").get<std::string>();
  r.domain = domain_from_string(j.at("domain").get<std::string>());
  for (const auto& f : j.at("fields")) {
    FeatureField field;
    field.name = f.at("name").get<std::string>();
    std::string kind = f.value("kind", "categorical");
    field.categorical = kind == "categorical";
    if (field.categorical)
      field.allowed = f.at("allowed").get<std::vector<std::string>>();
    r.fields.push_back(std::move(field));
  }
  for (const auto& rule : j.value("rules", json::array())) {
    r.rules.push_back({rule.at("field").get<std::string>(),
                       rule.at("equals").get<std::string>(),
                       rule.at("increment").get<int>()});
  }
  r.threshold = j.at("threshold").get<int>();
  r.approve_option = j.value("approve_option", "");
  r.deny_option = j.value("deny_option", "");
  for (const auto& band : j.value("bands", json::array())) {
    r.bands.push_back(
        {band.at("min_score").get<int>(), band.at("option").get<std::string>()});
  }
  r.extraction_prompt = j.at("extraction_prompt").get<std::string>();
  r.prompt_version = j.value("prompt_version", 1);
  validate(r);
  return r;
}

json rubric_to_json(const RubricSpec& r) {
  json fields = json::array();
  for (const auto& f : r.fields) {
    json jf{{"name", f.name}, {"kind", f.categorical ? "categorical" : "free_text"}};
    if (f.categorical) jf["allowed"] = f.allowed;
    fields.push_back(std::move(jf));
  }
  json rules = json::array();
  for (const auto& rule : r.rules)
    rules.push_back(
        {{"field", rule.field}, {"equals", rule.equals}, {"increment", rule.increment}});
  json bands = json::array();
  for (const auto& band : r.bands)
    bands.push_back({{"min_score", band.min_score}, {"option", band.option}});
  return json{{"schema_id", r.schema_id},
              {"domain", to_string(r.domain)},
              {"fields", fields},
              {"rules", rules},
              {"threshold", r.threshold},
              {"approve_option", r.approve_option},
              {"deny_option", r.deny_option},
              {"bands", bands},
              {"extraction_prompt", r.extraction_prompt},
              {"prompt_version", r.prompt_version}};
}

RubricSpec load_rubric(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open rubric file: " + path);
  json j;
  in >> j;
  return rubric_from_json(j);
}

void save_rubric(const std::string& path, const RubricSpec& rubric) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write rubric file: " + path);
  out << rubric_to_json(rubric).dump(2) << '\n';
}

namespace {

std::string decision_for_score(const RubricSpec& rubric, int score) {
  if (rubric.bands.empty())
    return score >= rubric.threshold ? rubric.approve_option : rubric.deny_option;
  for (const auto& band : rubric.bands) {
    if (score >= band.min_score) return band.option;
  }
  return rubric.bands.back().option;
}

}  // namespace

RubricDecision decide(const ExtractedFeatures& features, const RubricSpec& rubric) {
  if (features.validation != FeatureValidation::Valid)
    throw std::invalid_argument("decide: features must be valid (got " +
                                to_string(features.validation) + ")");
  if (features.schema_id != rubric.schema_id)
    throw std::invalid_argument("decide: features schema '" + features.schema_id +
                                "' does not match rubric '" + rubric.schema_id + "'");

  RubricDecision d;
  d.pair_id = features.pair_id;
  d.side = features.side;
  for (const auto& rule : rubric.rules) {
    auto it = features.values.find(rule.field);
    if (it != features.values.end() && it->second == rule.equals) {
      d.score += rule.increment;
      char sign = rule.increment >= 0 ? '+' : '-';
      d.contributing_rules.push_back(rule.field + "=" + rule.equals + ":" + sign +
                                     std::to_string(std::abs(rule.increment)));
    }
  }
  d.decision = decision_for_score(rubric, d.score);
  return d;
}

std::vector<DecisionTableRow> enumerate_rubric(const RubricSpec& rubric, std::size_t cap) {
  validate(rubric);
  std::vector<const FeatureField*> categorical;
  for (const auto& f : rubric.fields) {
    if (!f.categorical) continue;
    if (f.allowed.empty())
      throw std::invalid_argument("enumerate_rubric: categorical field '" + f.name +
                                  "' has an empty closed set");
    categorical.push_back(&f);
  }
  if (categorical.empty())
    throw std::invalid_argument("enumerate_rubric: no categorical fields to enumerate");

  std::size_t total = 1;
  for (const auto* f : categorical) {
    if (total > cap / f->allowed.size())
      throw std::invalid_argument("enumerate_rubric: combination count exceeds cap of " +
                                  std::to_string(cap));
    total *= f->allowed.size();
  }

  std::vector<DecisionTableRow> table;
  table.reserve(total);
  std::vector<std::size_t> index(categorical.size(), 0);
  for (;;) {
    ExtractedFeatures features;
    features.schema_id = rubric.schema_id;
    features.validation = FeatureValidation::Valid;
    DecisionTableRow row;
    for (std::size_t i = 0; i < categorical.size(); ++i) {
      const std::string& value = categorical[i]->allowed[index[i]];
      features.values[categorical[i]->name] = value;
      row.values[categorical[i]->name] = value;
    }
    RubricDecision d = decide(features, rubric);
    row.score = d.score;
    row.decision = d.decision;
    table.push_back(std::move(row));

    std::size_t pos = categorical.size();
    while (pos > 0) {
      --pos;
      if (++index[pos] < categorical[pos]->allowed.size()) break;
      index[pos] = 0;
      if (pos == 0) return table;
    }
  }
}

void write_decision_table_csv(std::ostream& os, const RubricSpec& rubric,
                              const std::vector<DecisionTableRow>& table) {
  std::vector<std::string> columns;
  for (const auto& f : rubric.fields)
    if (f.categorical) columns.push_back(f.name);
  for (const auto& c : columns) os << c << ',';
  os << "score,decision\n";
  for (const auto& row : table) {
    for (const auto& c : columns) os << row.values.at(c) << ',';
    os << row.score << ',' << row.decision << '\n';
  }
}

std::string render_extraction_prompt(const RubricSpec& rubric, const VignettePair& pair,
                                     Side side) {
  std::string prompt = rubric.extraction_prompt;
  prompt += "\n\n";
  if (!pair.context.empty()) {
    prompt += pair.context;
    prompt += "\n\n";
  }
  prompt += side == Side::Base ? pair.base_text : pair.swap_text;
  return prompt;
}

RunStructuredResult run_structured(const std::vector<VignettePair>& pairs,
                                   ModelGateway& gateway, const RubricSpec& rubric,
                                   int parallelism) {
  validate(rubric);
  for (const auto& pair : pairs) {
    if (pair.domain != rubric.domain)
      throw std::invalid_argument("run_structured: pair '" + pair.id + "' domain " +
                                  to_string(pair.domain) + " does not match rubric domain " +
                                  to_string(rubric.domain));
  }

  struct Slot {
    std::optional<StructuredOutcome> outcome;
    std::optional<PairFailure> failure;
  };
  std::vector<Slot> slots(pairs.size());

  parallel_for(pairs.size(), parallelism, [&](std::size_t i) {
    const VignettePair& pair = pairs[i];
    try {
      ModelResponse base_resp =
          gateway.query(render_extraction_prompt(rubric, pair, Side::Base));
      ModelResponse swap_resp =
          gateway.query(render_extraction_prompt(rubric, pair, Side::Swap));

      StructuredOutcome o;
      o.pair_id = pair.id;
      o.domain = pair.domain;
      o.bias_type = pair.bias_type;
      o.base_features = parse_features(base_resp.raw_text, rubric.schema_id, rubric.fields);
      o.base_features.pair_id = pair.id;
      o.base_features.side = Side::Base;
      o.swap_features = parse_features(swap_resp.raw_text, rubric.schema_id, rubric.fields);
      o.swap_features.pair_id = pair.id;
      o.swap_features.side = Side::Swap;

      if (o.base_features.validation == FeatureValidation::Valid &&
          o.swap_features.validation == FeatureValidation::Valid) {
        o.base_decision = decide(o.base_features, rubric);
        o.swap_decision = decide(o.swap_features, rubric);
        o.indicator = o.base_decision->decision != o.swap_decision->decision
                          ? stats::FlipIndicator::Flip
                          : stats::FlipIndicator::NoFlip;
      } else {
        o.indicator = stats::FlipIndicator::Excluded;
      }
      slots[i].outcome = std::move(o);
    } catch (const std::exception& e) {
      slots[i].failure = PairFailure{pair.id, e.what()};
    }
  });

  RunStructuredResult result;
  for (auto& slot : slots) {
    if (slot.outcome) result.outcomes.push_back(std::move(*slot.outcome));
    if (slot.failure) result.failures.push_back(std::move(*slot.failure));
  }
  return result;
}

}  // namespace flipaudit
