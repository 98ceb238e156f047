#include "flipaudit/runner.hpp"

#include <algorithm>
#include <ctime>
#include <fstream>
#include <map>
#include <sstream>

#include "flipaudit/audit_loop.hpp"
#include "flipaudit/entailment.hpp"
#include "flipaudit/text.hpp"

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

std::string file_sha256(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file for hashing: " + path);
  std::string content((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
  return sha256_hex(content);
}

json decision_record_json(const DecisionRecord& r) {
  return json{{"decision", r.decision},
              {"parse_method", to_string(r.parse_method)},
              {"rationale", r.rationale},
              {"raw_text", r.raw_text}};
}

DecisionRecord decision_record_from_json(const json& j, const std::string& pair_id,
                                         Side side) {
  DecisionRecord r;
  r.pair_id = pair_id;
  r.side = side;
  r.decision = j.at("decision").get<int>();
  r.parse_method = parse_method_from_string(j.at("parse_method").get<std::string>());
  r.rationale = j.value("rationale", "");
  r.raw_text = j.value("raw_text", "");
  return r;
}

json features_json(const ExtractedFeatures& f) {
  return json{{"schema_id", f.schema_id},
              {"validation", to_string(f.validation)},
              {"values", f.values},
              {"problems", f.problems}};
}

struct CellKey {
  Domain domain;
  BiasType bias;
  std::string model;
  bool operator<(const CellKey& other) const {
    return std::tie(domain, bias, model) <
           std::tie(other.domain, other.bias, other.model);
  }
};

struct RunContext {
  std::filesystem::path dir;
  json manifest;
  std::vector<stats::CellStats> cells;
  std::size_t failure_count = 0;
};

std::filesystem::path prepare_run_dir(const RunConfig& config,
                                      const std::string& corpus_hash) {
  json snapshot = config_snapshot(config);
  std::string run_hash = sha256_hex(snapshot.dump() + corpus_hash).substr(0, 12);
  std::filesystem::path dir =
      std::filesystem::path(config.output_dir) / (to_string(config.mode) + "-" + run_hash);
  std::filesystem::create_directories(dir);
  return dir;
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void write_cells(const std::filesystem::path& dir,
                 const std::vector<stats::CellStats>& cells) {
  {
    std::ofstream csv(dir / "cell_stats.csv");
    if (!csv) throw std::runtime_error("cannot write cell_stats.csv");
    stats::write_cell_stats_csv(csv, cells);
  }
  json arr = json::array();
  for (const auto& c : cells) {
    arr.push_back({{"domain", to_string(c.domain)},
                   {"bias_type", to_string(c.bias_type)},
                   {"model", c.model},
                   {"n", c.n},
                   {"k", c.k},
                   {"flip_rate", c.flip_rate},
                   {"wilson_low", c.wilson_low},
                   {"wilson_high", c.wilson_high},
                   {"p_value", c.p_value},
                   {"rejected_after_fdr", c.rejected_after_fdr},
                   {"excluded", c.excluded}});
  }
  write_json_file(dir / "cell_stats.json", arr);
}

void write_failures(const std::filesystem::path& dir,
                    const std::vector<std::pair<std::string, PairFailure>>& failures) {
  std::ofstream out(dir / "failures.jsonl");
  for (const auto& [model, f] : failures) {
    out << json{{"model", model}, {"pair_id", f.pair_id}, {"reason", f.reason}}.dump()
        << '\n';
  }
}

ResponseCache make_cache(const RunConfig& config) {
  if (config.cache_dir.empty()) return ResponseCache();
  return ResponseCache(config.cache_dir);
}

std::string prompt_template_of(const RunConfig& config) {
  return config.prompt_template.empty() ? kDefaultPromptTemplate
                                        : config.prompt_template;
}

}  // namespace

std::vector<VignettePair> select_pairs(const std::vector<VignettePair>& corpus,
                                       const RunConfig& config) {
  std::map<std::pair<Domain, BiasType>, int> taken;
  std::vector<VignettePair> selected;
  for (const auto& pair : corpus) {
    if (std::find(config.domains.begin(), config.domains.end(), pair.domain) ==
        config.domains.end())
      continue;
    if (std::find(config.bias_types.begin(), config.bias_types.end(), pair.bias_type) ==
        config.bias_types.end())
      continue;
    int& count = taken[{pair.domain, pair.bias_type}];
    if (count >= config.n_per_area) continue;
    ++count;
    selected.push_back(pair);
  }
  return selected;
}

BaselineChoice resolve_baseline(const RunConfig& config) {
  if (config.baseline_override) return {*config.baseline_override, "override"};
  if (!config.baseline_path.empty()) {
    std::ifstream in(config.baseline_path);
    if (!in)
      throw std::runtime_error("cannot open baseline file: " + config.baseline_path);
    json j;
    in >> j;
    double rate = j.at("pooled_rate").get<double>();
    // A measured baseline of zero degenerates the binomial test; fall back
    // to the 0.05 null in that case and say so.
    if (rate <= 0.0) return {0.05, "default (measured baseline was 0)"};
    if (rate >= 1.0)
      throw std::runtime_error("baseline file reports pooled_rate >= 1");
    return {rate, "measured"};
  }
  return {0.05, "default"};
}

namespace {

struct CellAccumulator {
  std::map<CellKey, std::vector<stats::FlipIndicator>> indicators;
  std::map<std::string, std::int64_t> parse_methods;

  void add_parse(const DecisionRecord& r) { ++parse_methods[to_string(r.parse_method)]; }
};

std::vector<stats::CellStats> finalize_cells(const CellAccumulator& acc, double p0,
                                             double fdr_q) {
  std::vector<stats::CellStats> cells;
  for (const auto& [key, indicators] : acc.indicators) {
    bool all_excluded =
        std::all_of(indicators.begin(), indicators.end(), [](stats::FlipIndicator f) {
          return f == stats::FlipIndicator::Excluded;
        });
    if (all_excluded) {
      stats::CellStats cs;
      cs.domain = key.domain;
      cs.bias_type = key.bias;
      cs.model = key.model;
      cs.excluded = static_cast<std::int64_t>(indicators.size());
      cs.p_value = 1.0;
      cells.push_back(cs);
      continue;
    }
    cells.push_back(
        stats::make_cell_stats(key.domain, key.bias, key.model, indicators, p0));
  }
  if (!cells.empty()) stats::apply_fdr(cells, fdr_q);
  return cells;
}

json cells_manifest_json(const std::vector<stats::CellStats>& cells) {
  json arr = json::array();
  for (const auto& c : cells) {
    arr.push_back({{"domain", to_string(c.domain)},
                   {"bias_type", to_string(c.bias_type)},
                   {"model", c.model},
                   {"n", c.n},
                   {"k", c.k},
                   {"excluded", c.excluded}});
  }
  return arr;
}

RunOutcome run_freeform(const RunConfig& config,
                        const std::vector<VignettePair>& pairs,
                        const std::filesystem::path& dir, json& manifest) {
  CellAccumulator acc;
  std::vector<std::pair<std::string, PairFailure>> failures;
  std::ofstream decisions(dir / "decisions.jsonl");
  if (!decisions) throw std::runtime_error("cannot write decisions.jsonl");

  for (const auto& endpoint : config.endpoints) {
    ModelGateway gateway(endpoint, make_cache(config));
    RunPairedResult result =
        gateway.run_paired(pairs, prompt_template_of(config), config.parallelism);
    for (const auto& d : result.decisions) {
      acc.indicators[{d.domain, d.bias_type, gateway.model_name()}].push_back(d.indicator);
      acc.add_parse(d.base);
      acc.add_parse(d.swap);
      decisions << json{{"pair_id", d.pair_id},
                        {"model", gateway.model_name()},
                        {"domain", to_string(d.domain)},
                        {"bias_type", to_string(d.bias_type)},
                        {"indicator", stats::to_string(d.indicator)},
                        {"base", decision_record_json(d.base)},
                        {"swap", decision_record_json(d.swap)}}
                       .dump()
                << '\n';
    }
    for (const auto& f : result.failures) failures.push_back({gateway.model_name(), f});
  }

  BaselineChoice baseline = resolve_baseline(config);
  std::vector<stats::CellStats> cells = finalize_cells(acc, baseline.p0, config.fdr_q);
  write_cells(dir, cells);
  write_failures(dir, failures);

  manifest["noise_baseline"] = {{"p0", baseline.p0}, {"source", baseline.source}};
  manifest["cells"] = cells_manifest_json(cells);
  manifest["parse_methods"] = acc.parse_methods;
  manifest["failure_count"] = failures.size();
  manifest["pairs_selected"] = pairs.size();

  RunOutcome outcome;
  outcome.run_dir = dir;
  outcome.exit_code = failures.empty() ? 0 : 2;
  std::ostringstream os;
  os << "freeform run: " << pairs.size() << " pairs x " << config.endpoints.size()
     << " model(s), " << failures.size() << " failure(s), p0=" << baseline.p0 << " ("
     << baseline.source << ")";
  outcome.summary = os.str();
  return outcome;
}

RunOutcome run_structured_mode(const RunConfig& config,
                               const std::vector<VignettePair>& all_pairs,
                               const std::filesystem::path& dir, json& manifest) {
  RubricSpec rubric = load_rubric(config.rubric_path);
  std::vector<VignettePair> pairs;
  for (const auto& p : all_pairs)
    if (p.domain == rubric.domain) pairs.push_back(p);
  if (pairs.empty())
    throw std::runtime_error("structured mode: no selected pairs in rubric domain " +
                             to_string(rubric.domain));

  CellAccumulator acc;
  std::vector<std::pair<std::string, PairFailure>> failures;
  std::ofstream decisions(dir / "structured_decisions.jsonl");
  if (!decisions) throw std::runtime_error("cannot write structured_decisions.jsonl");

  std::int64_t invalid_extractions = 0;
  for (const auto& endpoint : config.endpoints) {
    ModelGateway gateway(endpoint, make_cache(config));
    RunStructuredResult result =
        run_structured(pairs, gateway, rubric, config.parallelism);
    for (const auto& o : result.outcomes) {
      acc.indicators[{o.domain, o.bias_type, gateway.model_name()}].push_back(o.indicator);
      if (o.indicator == stats::FlipIndicator::Excluded) ++invalid_extractions;
      json rec{{"pair_id", o.pair_id},
               {"model", gateway.model_name()},
               {"domain", to_string(o.domain)},
               {"bias_type", to_string(o.bias_type)},
               {"indicator", stats::to_string(o.indicator)},
               {"base_features", features_json(o.base_features)},
               {"swap_features", features_json(o.swap_features)}};
      if (o.base_decision)
        rec["base_decision"] = {{"score", o.base_decision->score},
                                {"decision", o.base_decision->decision}};
      if (o.swap_decision)
        rec["swap_decision"] = {{"score", o.swap_decision->score},
                                {"decision", o.swap_decision->decision}};
      decisions << rec.dump() << '\n';
    }
    for (const auto& f : result.failures) failures.push_back({gateway.model_name(), f});
  }

  BaselineChoice baseline = resolve_baseline(config);
  std::vector<stats::CellStats> cells = finalize_cells(acc, baseline.p0, config.fdr_q);
  write_cells(dir, cells);
  write_failures(dir, failures);

  manifest["noise_baseline"] = {{"p0", baseline.p0}, {"source", baseline.source}};
  manifest["cells"] = cells_manifest_json(cells);
  manifest["rubric"] = {{"schema_id", rubric.schema_id},
                        {"prompt_version", rubric.prompt_version},
                        {"path", config.rubric_path}};
  manifest["invalid_extractions"] = invalid_extractions;
  manifest["failure_count"] = failures.size();
  manifest["pairs_selected"] = pairs.size();

  RunOutcome outcome;
  outcome.run_dir = dir;
  outcome.exit_code = failures.empty() ? 0 : 2;
  std::ostringstream os;
  os << "structured run: " << pairs.size() << " pairs x " << config.endpoints.size()
     << " model(s), rubric " << rubric.schema_id << " v" << rubric.prompt_version << ", "
     << invalid_extractions << " excluded extraction(s)";
  outcome.summary = os.str();
  return outcome;
}

RunOutcome run_controls_mode(const RunConfig& config,
                             const std::vector<VignettePair>& corpus,
                             const std::filesystem::path& dir, json& manifest) {
  auto synonyms = load_synonym_table(config.synonyms_path);
  std::vector<ControlPair> controls = generate_noise_controls(
      corpus, config.controls_per_domain, synonyms, config.seed, config.domains);
  save_control_corpus((dir / "control_pairs.jsonl").string(), controls);

  std::map<Domain, std::vector<stats::FlipIndicator>> per_domain;
  std::vector<std::pair<std::string, PairFailure>> failures;
  std::ofstream decisions(dir / "control_decisions.jsonl");
  const std::string tmpl = prompt_template_of(config);

  for (const auto& endpoint : config.endpoints) {
    ModelGateway gateway(endpoint, make_cache(config));
    for (const auto& control : controls) {
      try {
        ModelResponse base_resp =
            gateway.query(render_prompt(tmpl, render_control_body(control, false)));
        ModelResponse variant_resp =
            gateway.query(render_prompt(tmpl, render_control_body(control, true)));
        DecisionRecord base = parse_decision(base_resp.raw_text, control.options);
        base.pair_id = control.id;
        DecisionRecord variant = parse_decision(variant_resp.raw_text, control.options);
        variant.pair_id = control.id;
        variant.side = Side::Swap;
        stats::FlipIndicator indicator = record_flip(base, variant);
        per_domain[control.domain].push_back(indicator);
        decisions << json{{"control_id", control.id},
                          {"model", gateway.model_name()},
                          {"domain", to_string(control.domain)},
                          {"perturbation_kind", to_string(control.perturbation_kind)},
                          {"indicator", stats::to_string(indicator)},
                          {"base", decision_record_json(base)},
                          {"variant", decision_record_json(variant)}}
                         .dump()
                  << '\n';
      } catch (const std::exception& e) {
        failures.push_back({gateway.model_name(), {control.id, e.what()}});
      }
    }
  }

  stats::NoiseBaseline baseline = stats::noise_baseline(per_domain);
  json per_domain_json = json::object();
  for (const auto& [domain, counts] : baseline.per_domain) {
    per_domain_json[to_string(domain)] = {
        {"n", counts.n}, {"k", counts.k}, {"rate", counts.rate}};
  }
  write_json_file(dir / "baseline.json", json{{"pooled_rate", baseline.pooled_rate},
                                              {"pooled_n", baseline.pooled_n},
                                              {"pooled_k", baseline.pooled_k},
                                              {"per_domain", per_domain_json}});
  write_failures(dir, failures);

  manifest["controls"] = {{"count", controls.size()},
                          {"per_domain", config.controls_per_domain}};
  manifest["baseline"] = {{"pooled_rate", baseline.pooled_rate},
                          {"pooled_n", baseline.pooled_n},
                          {"pooled_k", baseline.pooled_k}};
  manifest["failure_count"] = failures.size();

  RunOutcome outcome;
  outcome.run_dir = dir;
  outcome.exit_code = failures.empty() ? 0 : 2;
  std::ostringstream os;
  os << "controls run: " << controls.size() << " control pairs, measured baseline "
     << baseline.pooled_rate;
  outcome.summary = os.str();
  return outcome;
}

RunOutcome run_winrate_mode(const RunConfig& config,
                            const std::vector<VignettePair>& pairs,
                            const std::filesystem::path& dir, json& manifest) {
  std::vector<std::string> vocabulary = load_vocabulary(config.vocabulary_path);
  if (!config.swap_pools_path.empty()) {
    auto pools = load_swap_pools(config.swap_pools_path);
    vocabulary = filter_vocabulary(vocabulary, pools);
  }
  if (vocabulary.empty())
    throw std::runtime_error("winrate mode: vocabulary is empty after filtering");

  const std::string tmpl = prompt_template_of(config);
  const int m = config.controls_per_vignette;

  json details = json::array();
  std::vector<int> targeted;
  std::vector<std::vector<int>> control_indicators;
  std::int64_t skipped_unparsed = 0;
  std::int64_t unparsed_controls = 0;
  std::vector<std::pair<std::string, PairFailure>> failures;

  for (const auto& endpoint : config.endpoints) {
    ModelGateway gateway(endpoint, make_cache(config));
    for (const auto& pair : pairs) {
      try {
        ModelResponse base_resp =
            gateway.query(render_prompt(tmpl, render_vignette_body(pair, Side::Base)));
        ModelResponse swap_resp =
            gateway.query(render_prompt(tmpl, render_vignette_body(pair, Side::Swap)));
        DecisionRecord base = parse_decision(base_resp.raw_text, pair.options);
        base.pair_id = pair.id;
        DecisionRecord swap = parse_decision(swap_resp.raw_text, pair.options);
        swap.pair_id = pair.id;
        swap.side = Side::Swap;
        stats::FlipIndicator d = record_flip(base, swap);
        if (d == stats::FlipIndicator::Excluded) {
          ++skipped_unparsed;
          continue;
        }

        std::vector<ControlPerturbation> perturbations =
            generate_controls(pair, m, vocabulary, config.seed);
        std::vector<int> c;
        c.reserve(perturbations.size());
        for (const auto& p : perturbations) {
          VignettePair variant = pair;
          variant.base_text = p.perturbed_text;
          ModelResponse var_resp = gateway.query(
              render_prompt(tmpl, render_vignette_body(variant, Side::Base)));
          DecisionRecord var = parse_decision(var_resp.raw_text, pair.options);
          // An unparseable control counts as no-flip; reported separately.
          if (var.decision == kUnparsed) {
            ++unparsed_controls;
            c.push_back(0);
          } else {
            c.push_back(var.decision != base.decision ? 1 : 0);
          }
        }
        targeted.push_back(d == stats::FlipIndicator::Flip ? 1 : 0);
        control_indicators.push_back(c);
        double mean =
            c.empty() ? 0.0
                      : static_cast<double>(std::count(c.begin(), c.end(), 1)) /
                            static_cast<double>(c.size());
        details.push_back({{"pair_id", pair.id},
                           {"model", gateway.model_name()},
                           {"d", targeted.back()},
                           {"control_mean", mean}});
      } catch (const std::exception& e) {
        failures.push_back({gateway.model_name(), {pair.id, e.what()}});
      }
    }
  }

  if (targeted.empty())
    throw std::runtime_error("winrate mode: no usable pairs (all unparsed or failed)");

  stats::WinRateResult wr = stats::win_rate(targeted, control_indicators);
  write_json_file(dir / "winrate.json", json{{"n", wr.n},
                                             {"m", wr.m},
                                             {"win_count", wr.win_count},
                                             {"win_rate", wr.win_rate},
                                             {"p_value", wr.p_value},
                                             {"skipped_unparsed_pairs", skipped_unparsed},
                                             {"unparsed_controls", unparsed_controls},
                                             {"details", details}});
  write_failures(dir, failures);

  manifest["winrate"] = {{"n", wr.n},
                         {"m", wr.m},
                         {"win_rate", wr.win_rate},
                         {"p_value", wr.p_value}};
  manifest["failure_count"] = failures.size();

  RunOutcome outcome;
  outcome.run_dir = dir;
  outcome.exit_code = failures.empty() ? 0 : 2;
  std::ostringstream os;
  os << "winrate run: n=" << wr.n << " m=" << wr.m << " WR=" << wr.win_rate
     << " p=" << wr.p_value;
  outcome.summary = os.str();
  return outcome;
}

RunOutcome run_validate_mode(const RunConfig& config,
                             const std::vector<VignettePair>& pairs,
                             const std::filesystem::path& dir, json& manifest) {
  // Free-form pass first (cache makes repeats free), then classify flips.
  RunOutcome freeform = run_freeform(config, pairs, dir, manifest);

  std::shared_ptr<EntailmentProvider> inner;
  if (config.entailment_url.empty())
    inner = std::make_shared<KeywordOverlapEntailment>();
  else
    inner = std::make_shared<HttpEntailmentProvider>(config.entailment_url);
  CachingEntailment provider(inner);

  std::ifstream decisions(dir / "decisions.jsonl");
  std::ofstream classifications(dir / "classifications.jsonl");
  std::vector<ClassifiedFlip> classified;
  std::string line;
  while (std::getline(decisions, line)) {
    if (line.empty()) continue;
    json rec = json::parse(line);
    if (stats::flip_indicator_from_string(rec.at("indicator").get<std::string>()) !=
        stats::FlipIndicator::Flip)
      continue;
    std::string pair_id = rec.at("pair_id").get<std::string>();
    DecisionRecord base = decision_record_from_json(rec.at("base"), pair_id, Side::Base);
    DecisionRecord swap = decision_record_from_json(rec.at("swap"), pair_id, Side::Swap);
    FlipClassification fc =
        classify_flip(pair_id, base.rationale, swap.rationale, provider);
    ClassifiedFlip cf;
    cf.pair_id = pair_id;
    cf.model = rec.at("model").get<std::string>();
    cf.bias_type = bias_type_from_string(rec.at("bias_type").get<std::string>());
    cf.cls = fc.cls;
    classified.push_back(cf);
    classifications << json{{"pair_id", pair_id},
                            {"model", cf.model},
                            {"bias_type", to_string(cf.bias_type)},
                            {"class", to_string(fc.cls)},
                            {"forward_label", to_string(fc.forward.label)},
                            {"forward_score", fc.forward.score},
                            {"backward_label", to_string(fc.backward.label)},
                            {"backward_score", fc.backward.score},
                            {"empty_rationale_warning", fc.empty_rationale_warning}}
                           .dump()
                    << '\n';
  }

  if (!classified.empty()) {
    ClassificationSummary summary = summarize_classifications(classified);
    json per_bias = json::object();
    for (const auto& [bias, cell] : summary.per_bias) {
      json cj{{"total", cell.total}, {"spurious", cell.spurious}};
      if (cell.share) cj["share"] = *cell.share;
      per_bias[to_string(bias)] = cj;
    }
    write_json_file(dir / "classification_summary.json",
                    json{{"total", summary.overall.total},
                         {"spurious", summary.overall.spurious},
                         {"share", summary.overall.share ? json(*summary.overall.share)
                                                         : json()},
                         {"per_bias", per_bias}});
    manifest["classified_flips"] = summary.overall.total;
  } else {
    manifest["classified_flips"] = 0;
  }

  freeform.summary += "; classified " + std::to_string(classified.size()) + " flip(s)";
  return freeform;
}

}  // namespace

RunOutcome cmd_run(const RunConfig& config) {
  validate(config);
  if (config.mode == RunMode::Loop)
    throw std::invalid_argument(
        "mode=loop is driven by the explicit loop subcommands "
        "(loop diagnose | loop patch | loop verify)");

  std::vector<VignettePair> corpus = load_corpus(config.corpus_path);
  std::string corpus_hash = file_sha256(config.corpus_path);
  std::filesystem::path dir = prepare_run_dir(config, corpus_hash);

  json manifest{{"code_version", std::string(kVersion)},
                {"mode", to_string(config.mode)},
                {"started_at", iso8601_now()},
                {"corpus_path", config.corpus_path},
                {"corpus_hash", corpus_hash},
                {"corpus_size", corpus.size()},
                {"config", config_snapshot(config)}};

  std::vector<VignettePair> pairs = select_pairs(corpus, config);

  // Cells with fewer available pairs than requested, flagged up front.
  {
    std::map<std::pair<Domain, BiasType>, int> available;
    for (const auto& p : pairs) ++available[{p.domain, p.bias_type}];
    json shortfall = json::array();
    for (Domain d : config.domains) {
      for (BiasType b : config.bias_types) {
        auto it = available.find({d, b});
        int have = it == available.end() ? 0 : it->second;
        if (have < config.n_per_area) {
          shortfall.push_back({{"domain", to_string(d)},
                               {"bias_type", to_string(b)},
                               {"available", have},
                               {"requested", config.n_per_area}});
        }
      }
    }
    manifest["shortfall"] = shortfall;
  }

  RunOutcome outcome;
  switch (config.mode) {
    case RunMode::Freeform:
      outcome = run_freeform(config, pairs, dir, manifest);
      break;
    case RunMode::Structured:
      outcome = run_structured_mode(config, pairs, dir, manifest);
      break;
    case RunMode::Controls:
      outcome = run_controls_mode(config, corpus, dir, manifest);
      break;
    case RunMode::Winrate:
      outcome = run_winrate_mode(config, pairs, dir, manifest);
      break;
    case RunMode::Validate:
      outcome = run_validate_mode(config, pairs, dir, manifest);
      break;
    case RunMode::Loop:
      break;  // rejected above
  }

  manifest["finished_at"] = iso8601_now();
  manifest["exit_code"] = outcome.exit_code;
  write_json_file(dir / "manifest.json", manifest);
  return outcome;
}

std::vector<TemplateSpec> load_templates(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open templates file: " + path);
  json j;
  in >> j;
  if (!j.is_array()) throw std::runtime_error(path + ": expected a JSON array");

  std::vector<TemplateSpec> specs;
  for (const auto& entry : j) {
    TemplateSpec spec;
    spec.tmpl.domain = domain_from_string(entry.at("domain").get<std::string>());
    spec.tmpl.context = entry.value("context", "");
    spec.tmpl.body = entry.at("body").get<std::string>();
    spec.tmpl.decision_prompt = entry.at("decision_prompt").get<std::string>();
    spec.tmpl.options = entry.at("options").get<std::vector<std::string>>();
    if (entry.contains("cycles")) {
      for (const auto& [slot, values] : entry.at("cycles").items())
        spec.cycles[slot] = values.get<std::vector<std::string>>();
    }
    specs.push_back(std::move(spec));
  }
  return specs;
}

std::vector<VignettePair> generate_corpus(const std::vector<TemplateSpec>& templates,
                                          const std::vector<InterventionSpec>& pools,
                                          const std::vector<Domain>& domains,
                                          const std::vector<BiasType>& bias_types,
                                          int per_area) {
  if (per_area < 1) throw std::invalid_argument("generate: per_area must be >= 1");

  std::vector<VignettePair> corpus;
  for (Domain domain : domains) {
    const TemplateSpec* spec = nullptr;
    for (const auto& t : templates) {
      if (t.tmpl.domain == domain) {
        spec = &t;
        break;
      }
    }
    if (spec == nullptr)
      throw std::invalid_argument("generate: no template for domain " + to_string(domain));

    std::vector<std::string> placeholders = template_placeholders(spec->tmpl);

    for (BiasType bias : bias_types) {
      const InterventionSpec* intervention = nullptr;
      for (const auto& p : pools) {
        bool targets_template =
            std::any_of(p.target_markers.begin(), p.target_markers.end(),
                        [&](const std::string& m) {
                          return std::find(placeholders.begin(), placeholders.end(), m) !=
                                 placeholders.end();
                        });
        if (p.bias_type == bias && targets_template) {
          intervention = &p;
          break;
        }
      }
      if (intervention == nullptr)
        throw std::invalid_argument("generate: no swap pool targets a slot of " +
                                    to_string(domain) + " for bias type " +
                                    to_string(bias));

      // Mixed-radix strides walk the full cartesian product of the cycles,
      // so slot values vary independently rather than in lockstep.
      std::map<std::string, std::size_t> cycle_stride;
      {
        std::size_t stride = 1;
        for (const auto& [slot, values] : spec->cycles) {
          cycle_stride[slot] = stride;
          if (!values.empty()) stride *= values.size();
        }
      }

      for (int i = 0; i < per_area; ++i) {
        std::map<std::string, std::string> slot_values;
        std::string serial = std::to_string(i);
        for (const std::string& slot : placeholders) {
          if (slot == "case_id") {
            slot_values[slot] = to_string(domain) + "-" + serial;
            continue;
          }
          auto cycle = spec->cycles.find(slot);
          if (cycle != spec->cycles.end() && !cycle->second.empty()) {
            std::size_t idx = (static_cast<std::size_t>(i) / cycle_stride.at(slot)) %
                              cycle->second.size();
            slot_values[slot] = cycle->second[idx];
            continue;
          }
          // Bias slots draw from their pool: the targeted one cycles, the
          // others pin to a fixed base value.
          for (const auto& p : pools) {
            if (std::find(p.target_markers.begin(), p.target_markers.end(), slot) ==
                p.target_markers.end())
              continue;
            slot_values[slot] =
                &p == intervention
                    ? p.base_pool[static_cast<std::size_t>(i) % p.base_pool.size()]
                    : p.base_pool.front();
            break;
          }
        }

        std::string id = to_string(domain) + "-" + to_string(bias) + "-" + serial;
        corpus.push_back(
            instantiate_template(spec->tmpl, slot_values, *intervention, id).pair);
      }
    }
  }
  return corpus;
}

int cmd_generate(const GenerateOptions& options) {
  auto templates = load_templates(options.templates_path);
  auto pools = load_swap_pools(options.swap_pools_path);
  auto corpus = generate_corpus(templates, pools, options.domains, options.bias_types,
                                options.per_area);
  save_corpus(options.output_path, corpus);
  return 0;
}

}  // namespace flipaudit
