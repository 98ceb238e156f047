#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "flipaudit/gateway.hpp"

namespace flipaudit {

enum class RunMode { Freeform, Structured, Controls, Winrate, Loop, Validate };

std::string to_string(RunMode m);
RunMode run_mode_from_string(std::string_view s);

struct RunConfig {
  std::string corpus_path;
  std::vector<EndpointConfig> endpoints;
  std::vector<BiasType> bias_types{kAllBiasTypes.begin(), kAllBiasTypes.end()};
  std::vector<Domain> domains{kAllDomains.begin(), kAllDomains.end()};
  int n_per_area = 10;
  RunMode mode = RunMode::Freeform;
  std::uint64_t seed = 0;
  int parallelism = 1;
  std::string output_dir = "runs";
  double fdr_q = 0.05;

  std::string cache_dir;
  std::string rubric_path;
  std::string prompt_template;            // empty → default template
  int controls_per_vignette = 20;         // M, winrate mode
  int controls_per_domain = 30;           // controls mode
  std::string vocabulary_path;
  std::string synonyms_path;
  std::string swap_pools_path;
  std::string baseline_path;              // baseline.json from a controls run
  std::optional<double> baseline_override;
  std::string entailment_url;             // empty → keyword-overlap stub
};

// Single flat key = value file; '#' lines are comments. Endpoints use dotted
// keys (endpoint.<id>.<field>); synthetic judges point at a JSON config via
// endpoint.<id>.config. API keys are only ever named by environment variable.
RunConfig load_run_config(const std::string& path);

// Usage errors before any network call.
void validate(const RunConfig& config);

// Manifest snapshot of the effective configuration (no secrets: endpoints
// carry env-var names, never key material).
nlohmann::json config_snapshot(const RunConfig& config);

}  // namespace flipaudit
