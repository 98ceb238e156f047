#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "flipaudit/config.hpp"
#include "flipaudit/controls.hpp"
#include "flipaudit/rubric.hpp"

namespace flipaudit {

struct RunOutcome {
  std::filesystem::path run_dir;
  int exit_code = 0;  // 0 clean, 2 partial (per-pair failures), 1 failed
  std::string summary;
};

// Executes the configured mode end to end and persists a run directory:
// manifest.json, decision records, cell_stats.{csv,json}, failures.jsonl and
// mode-specific artifacts. Run directories are content-addressed by
// (config hash, corpus hash); re-running an identical config reuses the
// directory and, with a cache configured, the responses.
RunOutcome cmd_run(const RunConfig& config);

// Applies the config's domain/bias subsets and the per-area target count.
std::vector<VignettePair> select_pairs(const std::vector<VignettePair>& corpus,
                                       const RunConfig& config);

// Noise-baseline p0 resolution: explicit override, then a baseline.json from
// a controls run, then the 0.05 default. `source` reports which was used.
struct BaselineChoice {
  double p0 = 0.05;
  std::string source = "default";
};
BaselineChoice resolve_baseline(const RunConfig& config);

// Corpus generation from scenario templates and swap pools.
struct GenerateOptions {
  std::string templates_path;
  std::string swap_pools_path;
  std::vector<Domain> domains{kAllDomains.begin(), kAllDomains.end()};
  std::vector<BiasType> bias_types{kAllBiasTypes.begin(), kAllBiasTypes.end()};
  int per_area = 10;
  std::string output_path;
};

struct TemplateSpec {
  VignetteTemplate tmpl;
  // Per-slot value cycles for decision-relevant variation across serials.
  std::map<std::string, std::vector<std::string>> cycles;
};

std::vector<TemplateSpec> load_templates(const std::string& path);

std::vector<VignettePair> generate_corpus(const std::vector<TemplateSpec>& templates,
                                          const std::vector<InterventionSpec>& pools,
                                          const std::vector<Domain>& domains,
                                          const std::vector<BiasType>& bias_types,
                                          int per_area);

int cmd_generate(const GenerateOptions& options);

}  // namespace flipaudit
