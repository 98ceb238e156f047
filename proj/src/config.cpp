#include "flipaudit/config.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>

#include "flipaudit/text.hpp"

namespace flipaudit {

using nlohmann::json;

std::string to_string(RunMode m) {
  switch (m) {
    case RunMode::Freeform: return "freeform";
    case RunMode::Structured: return "structured";
    case RunMode::Controls: return "controls";
    case RunMode::Winrate: return "winrate";
    case RunMode::Loop: return "loop";
    case RunMode::Validate: return "validate";
  }
  throw std::invalid_argument("unknown RunMode value");
}

RunMode run_mode_from_string(std::string_view s) {
  if (s == "freeform") return RunMode::Freeform;
  if (s == "structured") return RunMode::Structured;
  if (s == "controls") return RunMode::Controls;
  if (s == "winrate") return RunMode::Winrate;
  if (s == "loop") return RunMode::Loop;
  if (s == "validate") return RunMode::Validate;
  throw std::invalid_argument("unknown mode: " + std::string(s));
}

namespace {

std::vector<std::string> split_csv_list(const std::string& value) {
  std::vector<std::string> out;
  std::string current;
  for (char c : value) {
    if (c == ',') {
      std::string t = trim(current);
      if (!t.empty()) out.push_back(t);
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  std::string t = trim(current);
  if (!t.empty()) out.push_back(t);
  return out;
}

struct EndpointDraft {
  std::string id;
  std::map<std::string, std::string> fields;
};

EndpointConfig build_endpoint(const EndpointDraft& draft) {
  auto get = [&](const std::string& key) -> std::optional<std::string> {
    auto it = draft.fields.find(key);
    if (it == draft.fields.end()) return std::nullopt;
    return it->second;
  };

  std::string kind = get("kind").value_or("remote");
  if (kind == "synthetic") {
    SyntheticJudgeConfig judge;
    if (auto path = get("config")) judge = judge_config_from_json_file(*path);
    judge.name = get("model").value_or(judge.name.empty() ? draft.id : judge.name);
    if (auto seed = get("seed")) judge.seed = std::stoull(*seed);
    validate(judge);
    return judge;
  }
  if (kind != "remote")
    throw std::invalid_argument("endpoint '" + draft.id + "': unknown kind '" + kind +
                                "' (expected remote or synthetic)");

  ModelEndpointConfig cfg;
  cfg.name = get("model").value_or(draft.id);
  cfg.base_url = get("base_url").value_or("");
  cfg.api_key_env = get("api_key_env").value_or("");
  if (auto t = get("temperature")) cfg.temperature = std::stod(*t);
  if (auto m = get("max_tokens")) cfg.max_tokens = std::stoi(*m);
  if (auto t = get("timeout_ms")) cfg.timeout = std::chrono::milliseconds(std::stoll(*t));
  if (auto r = get("max_retries")) cfg.max_retries = std::stoi(*r);
  if (auto b = get("initial_backoff_ms"))
    cfg.initial_backoff = std::chrono::milliseconds(std::stoll(*b));
  if (auto r = get("rate_limit_per_sec")) cfg.rate_limit_per_sec = std::stod(*r);
  validate(cfg);
  return cfg;
}

}  // namespace

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);

  RunConfig config;
  std::vector<EndpointDraft> drafts;
  auto draft_for = [&](const std::string& id) -> EndpointDraft& {
    for (auto& d : drafts)
      if (d.id == id) return d;
    drafts.push_back({id, {}});
    return drafts.back();
  };

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    std::size_t eq = stripped.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(path + ": line " + std::to_string(line_no) +
                               ": expected key = value");
    std::string key = lowercase(trim(stripped.substr(0, eq)));
    std::string value = trim(stripped.substr(eq + 1));

    try {
      if (key.rfind("endpoint.", 0) == 0) {
        std::string rest = key.substr(9);
        std::size_t dot = rest.find('.');
        if (dot == std::string::npos || dot == 0 || dot + 1 >= rest.size())
          throw std::runtime_error("endpoint keys use endpoint.<id>.<field>");
        draft_for(rest.substr(0, dot)).fields[rest.substr(dot + 1)] = value;
      } else if (key == "corpus") {
        config.corpus_path = value;
      } else if (key == "mode") {
        config.mode = run_mode_from_string(value);
      } else if (key == "bias_types") {
        config.bias_types.clear();
        if (value == "all") {
          config.bias_types.assign(kAllBiasTypes.begin(), kAllBiasTypes.end());
        } else {
          for (const auto& name : split_csv_list(value))
            config.bias_types.push_back(bias_type_from_string(name));
        }
      } else if (key == "domains") {
        config.domains.clear();
        if (value == "all") {
          config.domains.assign(kAllDomains.begin(), kAllDomains.end());
        } else {
          for (const auto& name : split_csv_list(value))
            config.domains.push_back(domain_from_string(name));
        }
      } else if (key == "n_per_area") {
        config.n_per_area = std::stoi(value);
      } else if (key == "seed") {
        config.seed = std::stoull(value);
      } else if (key == "parallelism") {
        config.parallelism = std::stoi(value);
      } else if (key == "output_dir") {
        config.output_dir = value;
      } else if (key == "fdr_q") {
        config.fdr_q = std::stod(value);
      } else if (key == "cache_dir") {
        config.cache_dir = value;
      } else if (key == "rubric") {
        config.rubric_path = value;
      } else if (key == "prompt_template_file") {
        std::ifstream tf(value);
        if (!tf) throw std::runtime_error("cannot open prompt template: " + value);
        config.prompt_template.assign(std::istreambuf_iterator<char>(tf),
                                      std::istreambuf_iterator<char>());
      } else if (key == "controls_m") {
        config.controls_per_vignette = std::stoi(value);
      } else if (key == "controls_per_domain") {
        config.controls_per_domain = std::stoi(value);
      } else if (key == "vocabulary") {
        config.vocabulary_path = value;
      } else if (key == "synonyms") {
        config.synonyms_path = value;
      } else if (key == "swap_pools") {
        config.swap_pools_path = value;
      } else if (key == "baseline") {
        config.baseline_path = value;
      } else if (key == "noise_baseline") {
        config.baseline_override = std::stod(value);
      } else if (key == "entailment_url") {
        config.entailment_url = value;
      } else {
        throw std::runtime_error("unknown configuration key '" + key + "'");
      }
    } catch (const std::runtime_error&) {
      throw;
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ": line " + std::to_string(line_no) + ": " +
                               e.what());
    }
  }

  for (const auto& draft : drafts) config.endpoints.push_back(build_endpoint(draft));
  return config;
}

void validate(const RunConfig& config) {
  if (config.corpus_path.empty())
    throw std::invalid_argument("config: corpus path required");
  if (config.endpoints.empty())
    throw std::invalid_argument("config: at least one endpoint required");
  if (config.bias_types.empty())
    throw std::invalid_argument("config: bias_types subset must be non-empty");
  if (config.domains.empty())
    throw std::invalid_argument("config: domains subset must be non-empty");
  if (config.n_per_area < 1)
    throw std::invalid_argument("config: n_per_area must be >= 1");
  if (!(config.fdr_q > 0.0 && config.fdr_q < 1.0))
    throw std::invalid_argument("config: fdr_q must be in (0, 1)");
  if (config.parallelism < 1)
    throw std::invalid_argument("config: parallelism must be >= 1");
  if (config.mode == RunMode::Structured && config.rubric_path.empty())
    throw std::invalid_argument("config: structured mode requires a rubric");
  if (config.mode == RunMode::Controls && config.synonyms_path.empty())
    throw std::invalid_argument("config: controls mode requires a synonym table");
  if (config.mode == RunMode::Winrate && config.vocabulary_path.empty())
    throw std::invalid_argument("config: winrate mode requires a vocabulary");
  if (config.baseline_override &&
      !(*config.baseline_override > 0.0 && *config.baseline_override < 1.0))
    throw std::invalid_argument("config: noise_baseline override must be in (0, 1)");

  std::set<std::string> names;
  for (const auto& e : config.endpoints) {
    if (!names.insert(endpoint_name(e)).second)
      throw std::invalid_argument("config: duplicate endpoint name '" +
                                  endpoint_name(e) + "'");
  }
}

json config_snapshot(const RunConfig& config) {
  json endpoints = json::array();
  for (const auto& e : config.endpoints) {
    if (const auto* remote = std::get_if<ModelEndpointConfig>(&e)) {
      endpoints.push_back({{"kind", "remote"},
                           {"model", remote->name},
                           {"base_url", remote->base_url},
                           {"api_key_env", remote->api_key_env},
                           {"temperature", remote->temperature},
                           {"max_tokens", remote->max_tokens},
                           {"timeout_ms", remote->timeout.count()},
                           {"max_retries", remote->max_retries}});
    } else {
      const auto& judge = std::get<SyntheticJudgeConfig>(e);
      endpoints.push_back(
          {{"kind", "synthetic"}, {"model", judge.name}, {"seed", judge.seed}});
    }
  }
  std::vector<std::string> bias_names;
  for (BiasType b : config.bias_types) bias_names.push_back(to_string(b));
  std::vector<std::string> domain_names;
  for (Domain d : config.domains) domain_names.push_back(to_string(d));

  json j{{"corpus", config.corpus_path},
         {"mode", to_string(config.mode)},
         {"bias_types", bias_names},
         {"domains", domain_names},
         {"n_per_area", config.n_per_area},
         {"seed", config.seed},
         {"parallelism", config.parallelism},
         {"output_dir", config.output_dir},
         {"fdr_q", config.fdr_q},
         {"cache_dir", config.cache_dir},
         {"rubric", config.rubric_path},
         {"controls_m", config.controls_per_vignette},
         {"controls_per_domain", config.controls_per_domain},
         {"endpoints", endpoints}};
  if (config.baseline_override) j["noise_baseline_override"] = *config.baseline_override;
  if (!config.baseline_path.empty()) j["baseline"] = config.baseline_path;
  if (!config.entailment_url.empty()) j["entailment_url"] = config.entailment_url;
  return j;
}

}  // namespace flipaudit
