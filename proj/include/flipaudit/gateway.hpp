#pragma once

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "flipaudit/parsing.hpp"
#include "flipaudit/vignette.hpp"

namespace flipaudit {

// Remote chat-completion endpoint. Temperature is hard-capped at 0.1 so
// decoding stays near-greedy and flips are attributable to the input.
struct ModelEndpointConfig {
  std::string name;
  std::string base_url;
  std::string api_key_env;
  double temperature = 0.0;
  int max_tokens = 512;
  std::chrono::milliseconds timeout{30000};
  int max_retries = 3;
  std::chrono::milliseconds initial_backoff{1000};
  double rate_limit_per_sec = 0.0;  // 0 = unlimited
};

void validate(const ModelEndpointConfig& cfg);

// Deterministic synthetic judge with injectable bias, used to validate the
// harness end to end without network access. The judge is a pure function of
// (config, prompt text):
//   - the decision comes from the first policy token found in the prompt;
//   - when a bias trigger marker is present, the decision flips with the
//     configured probability, using a hash of (seed, prompt stripped of all
//     marker text) as the random draw — base and swap strip to the same
//     residue, so the draw matches across sides and flips occur only through
//     marker presence;
//   - prompts containing `extraction_marker` get feature-extraction output:
//     every key=value token in the prompt echoed as a JSON object, with
//     configured leak rules corrupting a field when their trigger is present
//     and their patch phrase is absent from the prompt.
struct SyntheticJudgeConfig {
  std::string name = "synthetic-judge";
  std::uint64_t seed = 0;
  int default_option = 0;
  // First matching token decides; checked in order.
  std::vector<std::pair<std::string, int>> policy;

  struct BiasRule {
    double flip_prob = 0.0;
    std::vector<std::string> triggers;    // swap-side markers
    std::vector<std::string> neutralize;  // base-side counterparts, stripped too
  };
  std::map<BiasType, BiasRule> bias;

  // Marker-insensitive stochastic flips: every distinct prompt draws
  // independently, modeling decoding noise rather than targeted bias.
  double noise_flip_prob = 0.0;

  struct LeakRule {
    BiasType bias_type = BiasType::Authority;
    std::string field;
    std::string value;         // corrupted value emitted when leaking
    std::string patch_phrase;  // leak suppressed when present in the prompt
    double prob = 1.0;
  };
  std::vector<LeakRule> leaks;
  std::string extraction_marker = "Extract JSON";
};

void validate(const SyntheticJudgeConfig& cfg);

SyntheticJudgeConfig judge_config_from_json_file(const std::string& path);

class SyntheticJudge {
 public:
  explicit SyntheticJudge(SyntheticJudgeConfig cfg);
  // Pure; safe to call concurrently.
  std::string respond(const std::string& prompt) const;

 private:
  std::string residue(const std::string& prompt) const;
  std::string respond_decision(const std::string& prompt) const;
  std::string respond_extraction(const std::string& prompt) const;
  SyntheticJudgeConfig cfg_;
};

struct ModelResponse {
  std::string raw_text;
  std::chrono::milliseconds latency{0};
  bool cached = false;
  std::string request_fingerprint;
};

// Content-addressed on-disk response cache: one directory per model, one
// JSON file per request fingerprint. Append-only; concurrent readers are
// fine and writes of distinct keys go to distinct files.
class ResponseCache {
 public:
  ResponseCache() = default;  // disabled
  explicit ResponseCache(std::filesystem::path root);

  bool enabled() const { return !root_.empty(); }
  std::optional<std::string> lookup(const std::string& model,
                                    const std::string& fingerprint) const;
  void store(const std::string& model, const std::string& fingerprint,
             const nlohmann::json& request, const std::string& response_text);

 private:
  std::filesystem::path root_;
  // unique_ptr keeps the cache movable.
  std::unique_ptr<std::mutex> write_mutex_ = std::make_unique<std::mutex>();
};

using EndpointConfig = std::variant<ModelEndpointConfig, SyntheticJudgeConfig>;

const std::string& endpoint_name(const EndpointConfig& cfg);

struct PairFailure {
  std::string pair_id;
  std::string reason;
};

struct PairedDecision {
  std::string pair_id;
  Domain domain = Domain::CriminalJustice;
  BiasType bias_type = BiasType::Demographic;
  DecisionRecord base;
  DecisionRecord swap;
  stats::FlipIndicator indicator = stats::FlipIndicator::Excluded;
};

struct RunPairedResult {
  std::vector<PairedDecision> decisions;
  std::vector<PairFailure> failures;
};

// Default prompt template; `{body}` is the single vignette placeholder.
extern const std::string kDefaultPromptTemplate;

// Full vignette body for one side: context, scenario text, decision task
// with lettered options.
std::string render_vignette_body(const VignettePair& pair, Side side);
std::string render_control_body(const ControlPair& pair, bool variant);
std::string render_prompt(const std::string& prompt_template, const std::string& body);

// Uniform interface over remote endpoints and the synthetic judge, with
// optional response caching and bounded-parallelism batch helpers.
class ModelGateway {
 public:
  ModelGateway(EndpointConfig endpoint, ResponseCache cache = ResponseCache());

  const std::string& model_name() const;

  // Cache-first single query. Remote transport failures retry with
  // exponential backoff on 429/5xx/timeout, then throw std::runtime_error.
  ModelResponse query(const std::string& prompt);

  // Base and swap prompts for every pair, identical template except the
  // body. Per-pair failures are recorded, not thrown.
  RunPairedResult run_paired(const std::vector<VignettePair>& pairs,
                             const std::string& prompt_template,
                             int parallelism = 1);

  static std::string fingerprint(const EndpointConfig& endpoint,
                                 const std::string& prompt);

 private:
  ModelResponse query_remote(const ModelEndpointConfig& cfg, const std::string& prompt);

  EndpointConfig endpoint_;
  ResponseCache cache_;
  std::unique_ptr<SyntheticJudge> judge_;
  std::mutex rate_mutex_;
  double rate_tokens_ = 0.0;
  std::chrono::steady_clock::time_point rate_last_{};
};

// Runs `fn(i)` for i in [0, n) on up to `parallelism` threads.
void parallel_for(std::size_t n, int parallelism,
                  const std::function<void(std::size_t)>& fn);

}  // namespace flipaudit
