#include "flipaudit/gateway.hpp"

#include <httplib.h>

#include <atomic>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "flipaudit/text.hpp"

namespace flipaudit {

using nlohmann::json;

void validate(const ModelEndpointConfig& cfg) {
  if (cfg.name.empty()) throw std::invalid_argument("endpoint: name required");
  if (cfg.base_url.empty())
    throw std::invalid_argument("endpoint '" + cfg.name + "': base_url required");
  if (cfg.temperature < 0.0 || cfg.temperature > 0.1)
    throw std::invalid_argument("endpoint '" + cfg.name +
                                "': temperature must be in [0, 0.1]");
  if (cfg.max_tokens <= 0)
    throw std::invalid_argument("endpoint '" + cfg.name + "': max_tokens must be > 0");
  if (cfg.max_retries < 0)
    throw std::invalid_argument("endpoint '" + cfg.name + "': max_retries must be >= 0");
}

void validate(const SyntheticJudgeConfig& cfg) {
  if (cfg.name.empty()) throw std::invalid_argument("judge: name required");
  if (cfg.default_option < 0)
    throw std::invalid_argument("judge '" + cfg.name + "': default_option must be >= 0");
  for (const auto& [bias, rule] : cfg.bias) {
    if (rule.flip_prob < 0.0 || rule.flip_prob > 1.0)
      throw std::invalid_argument("judge '" + cfg.name + "': flip probability for " +
                                  to_string(bias) + " must be in [0, 1]");
  }
  for (const auto& leak : cfg.leaks) {
    if (leak.field.empty())
      throw std::invalid_argument("judge '" + cfg.name + "': leak rule without field");
    if (leak.prob < 0.0 || leak.prob > 1.0)
      throw std::invalid_argument("judge '" + cfg.name +
                                  "': leak probability must be in [0, 1]");
  }
  if (cfg.noise_flip_prob < 0.0 || cfg.noise_flip_prob > 1.0)
    throw std::invalid_argument("judge '" + cfg.name +
                                "': noise_flip_prob must be in [0, 1]");
}

SyntheticJudgeConfig judge_config_from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open judge config: " + path);
  json j;
  in >> j;

  SyntheticJudgeConfig cfg;
  cfg.name = j.value("name", cfg.name);
  cfg.seed = j.value("seed", std::uint64_t{0});
  cfg.default_option = j.value("default_option", 0);
  if (j.contains("policy")) {
    for (const auto& entry : j.at("policy")) {
      cfg.policy.push_back({entry.at("token").get<std::string>(),
                            entry.at("option").get<int>()});
    }
  }
  if (j.contains("bias")) {
    for (const auto& [key, value] : j.at("bias").items()) {
      SyntheticJudgeConfig::BiasRule rule;
      rule.flip_prob = value.value("flip_prob", 0.0);
      if (value.contains("triggers"))
        rule.triggers = value.at("triggers").get<std::vector<std::string>>();
      if (value.contains("neutralize"))
        rule.neutralize = value.at("neutralize").get<std::vector<std::string>>();
      cfg.bias[bias_type_from_string(key)] = std::move(rule);
    }
  }
  if (j.contains("leaks")) {
    for (const auto& entry : j.at("leaks")) {
      SyntheticJudgeConfig::LeakRule leak;
      leak.bias_type = bias_type_from_string(entry.at("bias_type").get<std::string>());
      leak.field = entry.at("field").get<std::string>();
      leak.value = entry.at("value").get<std::string>();
      leak.patch_phrase = entry.value("patch_phrase", "");
      leak.prob = entry.value("prob", 1.0);
      cfg.leaks.push_back(std::move(leak));
    }
  }
  cfg.noise_flip_prob = j.value("noise_flip_prob", 0.0);
  cfg.extraction_marker = j.value("extraction_marker", cfg.extraction_marker);
  validate(cfg);
  return cfg;
}

SyntheticJudge::SyntheticJudge(SyntheticJudgeConfig cfg) : cfg_(std::move(cfg)) {
  validate(cfg_);
}

std::string SyntheticJudge::residue(const std::string& prompt) const {
  std::string out = prompt;
  auto strip_all = [&out](const std::string& marker) {
    if (marker.empty()) return;
    std::size_t pos = 0;
    while ((pos = out.find(marker, pos)) != std::string::npos)
      out.erase(pos, marker.size());
  };
  for (const auto& [bias, rule] : cfg_.bias) {
    for (const auto& t : rule.triggers) strip_all(t);
    for (const auto& n : rule.neutralize) strip_all(n);
  }
  // Collapse whitespace so marker removal leaves no positional residue.
  std::string collapsed;
  collapsed.reserve(out.size());
  bool pending_space = false;
  for (char c : out) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !collapsed.empty();
      continue;
    }
    if (pending_space) {
      collapsed.push_back(' ');
      pending_space = false;
    }
    collapsed.push_back(c);
  }
  return collapsed;
}

namespace {

// key=value tokens embedded in synthetic vignettes ("credit=good").
std::vector<std::pair<std::string, std::string>> feature_tokens(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const Token& t : tokenize(text)) {
    std::size_t eq = t.core.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 >= t.core.size()) continue;
    std::string key = t.core.substr(0, eq);
    std::string value = t.core.substr(eq + 1);
    bool key_ok = std::all_of(key.begin(), key.end(), [](char c) {
      return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
    });
    if (key_ok) out.push_back({key, value});
  }
  return out;
}

int prompt_option_count(const std::string& prompt) {
  int max_index = -1;
  for (std::size_t i = 0; i + 2 < prompt.size(); ++i) {
    if (prompt[i] == '(' && prompt[i + 2] == ')' &&
        std::isalpha(static_cast<unsigned char>(prompt[i + 1]))) {
      int idx = std::tolower(static_cast<unsigned char>(prompt[i + 1])) - 'a';
      if (idx >= 0 && idx < 10) max_index = std::max(max_index, idx);
    }
  }
  return max_index >= 1 ? max_index + 1 : 2;
}

std::string option_letter(int index) {
  std::string s = "(a)";
  s[1] = static_cast<char>('a' + index);
  return s;
}

}  // namespace

std::string SyntheticJudge::respond_decision(const std::string& prompt) const {
  const std::string r = residue(prompt);
  const int option_count = prompt_option_count(prompt);

  int decision = cfg_.default_option % option_count;
  for (const auto& [token, option] : cfg_.policy) {
    if (prompt.find(token) != std::string::npos) {
      decision = option % option_count;
      break;
    }
  }

  for (const auto& [bias, rule] : cfg_.bias) {
    if (rule.flip_prob <= 0.0) continue;
    bool triggered = std::any_of(rule.triggers.begin(), rule.triggers.end(),
                                 [&](const std::string& t) {
                                   return !t.empty() &&
                                          prompt.find(t) != std::string::npos;
                                 });
    if (!triggered) continue;
    double u = unit_interval(
        hash_combine(hash_combine(cfg_.seed, "flip:" + to_string(bias)), r));
    if (u < rule.flip_prob) decision = (decision + 1) % option_count;
  }

  if (cfg_.noise_flip_prob > 0.0) {
    double u = unit_interval(hash_combine(hash_combine(cfg_.seed, "noise"), prompt));
    if (u < cfg_.noise_flip_prob) decision = (decision + 1) % option_count;
  }

  std::string rationale = "Weighed the documented case factors";
  auto features = feature_tokens(r);
  if (!features.empty()) {
    rationale += ":";
    for (const auto& [k, v] : features) rationale += " " + k + "=" + v;
  }
  return option_letter(decision) + " " + rationale + ".";
}

std::string SyntheticJudge::respond_extraction(const std::string& prompt) const {
  const std::string r = residue(prompt);
  json obj = json::object();
  for (const auto& [k, v] : feature_tokens(prompt)) obj[k] = v;

  for (const auto& leak : cfg_.leaks) {
    auto bias_it = cfg_.bias.find(leak.bias_type);
    if (bias_it == cfg_.bias.end()) continue;
    bool triggered = std::any_of(bias_it->second.triggers.begin(),
                                 bias_it->second.triggers.end(),
                                 [&](const std::string& t) {
                                   return !t.empty() &&
                                          prompt.find(t) != std::string::npos;
                                 });
    if (!triggered) continue;
    if (!leak.patch_phrase.empty() &&
        lowercase(prompt).find(lowercase(leak.patch_phrase)) != std::string::npos)
      continue;
    double u = unit_interval(
        hash_combine(hash_combine(cfg_.seed, "leak:" + leak.field), r));
    if (u < leak.prob) obj[leak.field] = leak.value;
  }
  return obj.dump();
}

std::string SyntheticJudge::respond(const std::string& prompt) const {
  if (!cfg_.extraction_marker.empty() &&
      prompt.find(cfg_.extraction_marker) != std::string::npos)
    return respond_extraction(prompt);
  return respond_decision(prompt);
}

ResponseCache::ResponseCache(std::filesystem::path root) : root_(std::move(root)) {
  if (!root_.empty()) std::filesystem::create_directories(root_);
}

namespace {

std::string sanitize_path_component(const std::string& name) {
  std::string out;
  for (char c : name) {
    out.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' ||
                          c == '.'
                      ? c
                      : '_');
  }
  return out.empty() ? "_" : out;
}

}  // namespace

std::optional<std::string> ResponseCache::lookup(const std::string& model,
                                                 const std::string& fingerprint) const {
  if (!enabled()) return std::nullopt;
  std::filesystem::path file =
      root_ / sanitize_path_component(model) / (fingerprint + ".json");
  std::ifstream in(file);
  if (!in) return std::nullopt;
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.contains("response")) return std::nullopt;
  return j.at("response").value("raw_text", std::string());
}

void ResponseCache::store(const std::string& model, const std::string& fingerprint,
                          const json& request, const std::string& response_text) {
  if (!enabled()) return;
  std::filesystem::path dir = root_ / sanitize_path_component(model);
  std::filesystem::path file = dir / (fingerprint + ".json");

  json j{{"request", request},
         {"response", {{"raw_text", response_text}}},
         {"timestamp",
          std::chrono::duration_cast<std::chrono::seconds>(
              std::chrono::system_clock::now().time_since_epoch())
              .count()}};

  std::lock_guard<std::mutex> lock(*write_mutex_);
  std::filesystem::create_directories(dir);
  if (std::filesystem::exists(file)) return;  // append-only
  std::filesystem::path tmp = file;
  tmp += ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw std::runtime_error("cache: cannot write " + tmp.string());
    out << j.dump();
  }
  std::filesystem::rename(tmp, file);
}

const std::string& endpoint_name(const EndpointConfig& cfg) {
  if (const auto* remote = std::get_if<ModelEndpointConfig>(&cfg)) return remote->name;
  return std::get<SyntheticJudgeConfig>(cfg).name;
}

const std::string kDefaultPromptTemplate =
    "You are reviewing a decision case. Read it carefully and choose exactly one "
    "option.\n\n{body}\n\nReply with the chosen option letter in parentheses, "
    "followed by a brief rationale.";

std::string render_vignette_body(const VignettePair& pair, Side side) {
  std::string body;
  if (!pair.context.empty()) {
    body += pair.context;
    body += "\n\n";
  }
  body += side == Side::Base ? pair.base_text : pair.swap_text;
  body += "\n\n";
  body += pair.decision_prompt;
  body += "\n";
  for (std::size_t i = 0; i < pair.options.size(); ++i) {
    if (i > 0) body += "  ";
    body += option_letter(static_cast<int>(i)) + " " + pair.options[i];
  }
  return body;
}

std::string render_control_body(const ControlPair& pair, bool variant) {
  std::string body = variant ? pair.variant_text : pair.base_text;
  body += "\n\n";
  body += pair.decision_prompt;
  body += "\n";
  for (std::size_t i = 0; i < pair.options.size(); ++i) {
    if (i > 0) body += "  ";
    body += option_letter(static_cast<int>(i)) + " " + pair.options[i];
  }
  return body;
}

std::string render_prompt(const std::string& prompt_template, const std::string& body) {
  const std::string placeholder = "{body}";
  std::size_t first = prompt_template.find(placeholder);
  if (first == std::string::npos)
    throw std::invalid_argument("prompt template must contain exactly one {body}");
  if (prompt_template.find(placeholder, first + 1) != std::string::npos)
    throw std::invalid_argument("prompt template must contain exactly one {body}");
  std::string out = prompt_template;
  out.replace(first, placeholder.size(), body);
  return out;
}

ModelGateway::ModelGateway(EndpointConfig endpoint, ResponseCache cache)
    : endpoint_(std::move(endpoint)), cache_(std::move(cache)) {
  if (const auto* remote = std::get_if<ModelEndpointConfig>(&endpoint_)) {
    validate(*remote);
  } else {
    judge_ = std::make_unique<SyntheticJudge>(std::get<SyntheticJudgeConfig>(endpoint_));
  }
  rate_last_ = std::chrono::steady_clock::now();
}

const std::string& ModelGateway::model_name() const { return endpoint_name(endpoint_); }

std::string ModelGateway::fingerprint(const EndpointConfig& endpoint,
                                      const std::string& prompt) {
  std::string params;
  if (const auto* remote = std::get_if<ModelEndpointConfig>(&endpoint)) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "remote|t=%.6f|max=%d", remote->temperature,
                  remote->max_tokens);
    params = buf;
  } else {
    const auto& judge = std::get<SyntheticJudgeConfig>(endpoint);
    params = "judge|seed=" + std::to_string(judge.seed);
  }
  return sha256_hex(endpoint_name(endpoint) + '\x1f' + params + '\x1f' + prompt);
}

ModelResponse ModelGateway::query(const std::string& prompt) {
  if (prompt.empty()) throw std::invalid_argument("query: prompt must be non-empty");

  ModelResponse resp;
  resp.request_fingerprint = fingerprint(endpoint_, prompt);

  if (auto hit = cache_.lookup(model_name(), resp.request_fingerprint)) {
    resp.raw_text = *hit;
    resp.cached = true;
    return resp;
  }

  auto start = std::chrono::steady_clock::now();
  json request{{"model", model_name()}, {"prompt", prompt}};
  if (judge_) {
    resp.raw_text = judge_->respond(prompt);
  } else {
    const auto& cfg = std::get<ModelEndpointConfig>(endpoint_);
    resp = query_remote(cfg, prompt);
    resp.request_fingerprint = fingerprint(endpoint_, prompt);
    request["temperature"] = cfg.temperature;
    request["max_tokens"] = cfg.max_tokens;
  }
  resp.latency = std::chrono::duration_cast<std::chrono::milliseconds>(
      std::chrono::steady_clock::now() - start);
  cache_.store(model_name(), resp.request_fingerprint, request, resp.raw_text);
  return resp;
}

namespace {

struct UrlParts {
  std::string host_base;  // scheme://host[:port]
  std::string path_prefix;
};

UrlParts split_base_url(const std::string& base_url) {
  std::size_t scheme_end = base_url.find("://");
  if (scheme_end == std::string::npos)
    throw std::invalid_argument("base_url must include a scheme: " + base_url);
  std::size_t path_start = base_url.find('/', scheme_end + 3);
  UrlParts parts;
  if (path_start == std::string::npos) {
    parts.host_base = base_url;
  } else {
    parts.host_base = base_url.substr(0, path_start);
    parts.path_prefix = base_url.substr(path_start);
    while (!parts.path_prefix.empty() && parts.path_prefix.back() == '/')
      parts.path_prefix.pop_back();
  }
  return parts;
}

bool retryable_status(int status) {
  return status == 429 || (status >= 500 && status < 600);
}

std::string body_excerpt(const std::string& body) {
  std::string t = trim(body);
  if (t.size() > 200) t = t.substr(0, 200) + "...";
  return t;
}

}  // namespace

ModelResponse ModelGateway::query_remote(const ModelEndpointConfig& cfg,
                                         const std::string& prompt) {
  // Token-bucket rate limit across threads.
  if (cfg.rate_limit_per_sec > 0.0) {
    std::unique_lock<std::mutex> lock(rate_mutex_);
    auto now = std::chrono::steady_clock::now();
    double elapsed = std::chrono::duration<double>(now - rate_last_).count();
    rate_last_ = now;
    rate_tokens_ = std::min(rate_tokens_ + elapsed * cfg.rate_limit_per_sec,
                            std::max(1.0, cfg.rate_limit_per_sec));
    if (rate_tokens_ < 1.0) {
      double wait = (1.0 - rate_tokens_) / cfg.rate_limit_per_sec;
      lock.unlock();
      std::this_thread::sleep_for(std::chrono::duration<double>(wait));
      lock.lock();
      rate_tokens_ = 0.0;
      rate_last_ = std::chrono::steady_clock::now();
    } else {
      rate_tokens_ -= 1.0;
    }
  }

  UrlParts url = split_base_url(cfg.base_url);

  json body{{"model", cfg.name},
            {"messages", json::array({json{{"role", "user"}, {"content", prompt}}})},
            {"temperature", cfg.temperature},
            {"max_tokens", cfg.max_tokens}};

  httplib::Headers headers;
  if (!cfg.api_key_env.empty()) {
    const char* key = std::getenv(cfg.api_key_env.c_str());
    if (key == nullptr || *key == '\0')
      throw std::runtime_error("endpoint '" + cfg.name + "': environment variable " +
                               cfg.api_key_env + " is not set");
    headers.insert({"Authorization", std::string("Bearer ") + key});
  }

  std::string last_error;
  auto backoff = cfg.initial_backoff;
  for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }

    httplib::Client client(url.host_base);
    client.set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(
        cfg.timeout));
    client.set_read_timeout(std::chrono::duration_cast<std::chrono::seconds>(cfg.timeout));
    client.set_write_timeout(std::chrono::duration_cast<std::chrono::seconds>(cfg.timeout));

    auto result = client.Post(url.path_prefix + "/chat/completions", headers,
                              body.dump(), "application/json");
    if (!result) {
      last_error = "transport error: " + httplib::to_string(result.error());
      continue;  // connect failures and timeouts are retryable
    }
    if (result->status >= 200 && result->status < 300) {
      json parsed = json::parse(result->body, nullptr, false);
      if (parsed.is_discarded())
        throw std::runtime_error("endpoint '" + cfg.name +
                                 "': malformed JSON response body");
      try {
        ModelResponse resp;
        resp.raw_text =
            parsed.at("choices").at(0).at("message").at("content").get<std::string>();
        return resp;
      } catch (const json::exception& e) {
        throw std::runtime_error("endpoint '" + cfg.name +
                                 "': unexpected response shape: " + e.what());
      }
    }
    if (retryable_status(result->status)) {
      last_error = "HTTP " + std::to_string(result->status) + ": " +
                   body_excerpt(result->body);
      continue;
    }
    throw std::runtime_error("endpoint '" + cfg.name + "': HTTP " +
                             std::to_string(result->status) + ": " +
                             body_excerpt(result->body));
  }
  throw std::runtime_error("endpoint '" + cfg.name + "': retries exhausted; last: " +
                           last_error);
}

void parallel_for(std::size_t n, int parallelism,
                  const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  std::size_t workers = parallelism <= 1
                            ? 1
                            : std::min<std::size_t>(static_cast<std::size_t>(parallelism), n);
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      for (;;) {
        std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        fn(i);
      }
    });
  }
  for (auto& t : threads) t.join();
}

RunPairedResult ModelGateway::run_paired(const std::vector<VignettePair>& pairs,
                                         const std::string& prompt_template,
                                         int parallelism) {
  render_prompt(prompt_template, "probe");  // validates the single {body} placeholder

  struct Slot {
    std::optional<PairedDecision> decision;
    std::optional<PairFailure> failure;
  };
  std::vector<Slot> slots(pairs.size());

  parallel_for(pairs.size(), parallelism, [&](std::size_t i) {
    const VignettePair& pair = pairs[i];
    try {
      ModelResponse base_resp =
          query(render_prompt(prompt_template, render_vignette_body(pair, Side::Base)));
      ModelResponse swap_resp =
          query(render_prompt(prompt_template, render_vignette_body(pair, Side::Swap)));

      PairedDecision d;
      d.pair_id = pair.id;
      d.domain = pair.domain;
      d.bias_type = pair.bias_type;
      d.base = parse_decision(base_resp.raw_text, pair.options);
      d.base.pair_id = pair.id;
      d.base.side = Side::Base;
      d.swap = parse_decision(swap_resp.raw_text, pair.options);
      d.swap.pair_id = pair.id;
      d.swap.side = Side::Swap;
      d.indicator = record_flip(d.base, d.swap);
      slots[i].decision = std::move(d);
    } catch (const std::exception& e) {
      slots[i].failure = PairFailure{pair.id, e.what()};
    }
  });

  RunPairedResult result;
  for (auto& slot : slots) {
    if (slot.decision) result.decisions.push_back(std::move(*slot.decision));
    if (slot.failure) result.failures.push_back(std::move(*slot.failure));
  }
  return result;
}

}  // namespace flipaudit
