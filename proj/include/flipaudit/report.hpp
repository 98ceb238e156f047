#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "flipaudit/stats.hpp"

#include <nlohmann/json.hpp>

namespace flipaudit {

struct LoadedRun {
  std::filesystem::path dir;
  nlohmann::json manifest;
  std::vector<stats::CellStats> cells;
};

LoadedRun load_run(const std::filesystem::path& dir);

// Percentage rendered at one decimal (the tables' display precision).
double percent1(double fraction);

// Relative change between the displayed Free and Struct percentage columns,
// rounded to a whole signed percent. Undefined when free is 0 and struct
// is not.
std::optional<int> relative_delta_percent(double free_pct, double struct_pct);
std::string format_signed_percent(std::optional<int> delta);

struct ReportTables {
  nlohmann::json model_bias;   // per model x bias type, plus overall
  nlohmann::json domain_bias;  // per domain x bias type, pooled across models
  nlohmann::json reduction;    // free-form vs structured with signed delta
  std::string text_summary;
};

// Builds the three report tables from one or more run directories and writes
// CSV + JSON + a text summary under out_dir. Pooling sums flip and pair
// counts before computing any rate; runs over different corpora (hash
// mismatch) refuse to pool. Regenerating reports never mutates run data.
ReportTables cmd_report(const std::vector<std::filesystem::path>& run_dirs,
                        const std::filesystem::path& out_dir);

// Recomputes every cell statistic from the persisted decision records and
// diffs against the run's cell_stats.json. Returns the mismatches (empty =
// report verified).
std::vector<std::string> verify_report(const std::filesystem::path& run_dir);

}  // namespace flipaudit
