#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "flipaudit/types.hpp"

namespace flipaudit::stats {

enum class FlipIndicator { Flip, NoFlip, Excluded };

std::string to_string(FlipIndicator f);
FlipIndicator flip_indicator_from_string(std::string_view s);

struct FlipCounts {
  std::int64_t n = 0;         // included (non-excluded) pairs
  std::int64_t k = 0;         // flips
  std::int64_t excluded = 0;
  double rate = 0.0;          // k / n
};

// Flip rate over included pairs. Throws if every indicator is excluded.
FlipCounts flip_rate(const std::vector<FlipIndicator>& indicators);

struct Interval {
  double low = 0.0;
  double high = 1.0;
};

// Wilson score interval for k successes out of n, clamped to [0, 1].
// z is the two-sided standard normal quantile for the given confidence.
Interval wilson_interval(std::int64_t k, std::int64_t n, double confidence);

// One-sided exact binomial p-value for H0: p <= p0 against p > p0,
// i.e. P[X >= k] with X ~ Binomial(n, p0).
double binomial_test_exceeds(std::int64_t k, std::int64_t n, double p0);

struct WinRateResult {
  std::int64_t n = 0;          // vignettes
  std::int64_t m = 0;          // controls per vignette
  std::int64_t win_count = 0;
  double win_rate = 0.0;
  double p_value = 1.0;        // H0: WR <= 0.5, one-sample binomial
};

// Win rate: fraction of vignettes where the targeted flip indicator strictly
// exceeds the mean of that vignette's control indicators. Ties are non-wins.
WinRateResult win_rate(const std::vector<int>& targeted,
                       const std::vector<std::vector<int>>& controls);

struct FdrOutcome {
  std::vector<double> sorted_p;   // ascending
  double q = 0.0;
  std::size_t k_star = 0;         // largest rejected rank, 0 when none
  std::vector<bool> rejected;     // in original test order
};

// Benjamini-Hochberg step-up procedure at level q. Ties in p are broken by
// a stable sort over the original order.
FdrOutcome bh_fdr(const std::vector<double>& p_values, double q);

struct NoiseBaseline {
  std::int64_t pooled_n = 0;
  std::int64_t pooled_k = 0;
  double pooled_rate = 0.0;
  std::map<Domain, FlipCounts> per_domain;
};

// Pooled flip rate over control pairs, plus per-domain rates. Throws if any
// requested domain has no included indicators.
NoiseBaseline noise_baseline(
    const std::map<Domain, std::vector<FlipIndicator>>& control_indicators);

struct CellStats {
  Domain domain = Domain::CriminalJustice;
  BiasType bias_type = BiasType::Demographic;
  std::string model;
  std::int64_t n = 0;
  std::int64_t k = 0;
  double flip_rate = 0.0;
  double wilson_low = 0.0;
  double wilson_high = 1.0;
  double p_value = 1.0;
  std::int64_t excluded = 0;
  bool rejected_after_fdr = false;
};

CellStats make_cell_stats(Domain domain, BiasType bias_type,
                          const std::string& model,
                          const std::vector<FlipIndicator>& indicators,
                          double p0, double confidence = 0.95);

// Applies BH-FDR across the cells' p-values and sets rejected_after_fdr.
void apply_fdr(std::vector<CellStats>& cells, double q);

void write_cell_stats_csv(std::ostream& os, const std::vector<CellStats>& cells);

// Smallest equal-tailed interval [lo, hi] of Binomial(n, p) counts with at
// most (1 - coverage)/2 probability in each tail.
std::pair<std::int64_t, std::int64_t> binomial_envelope(std::int64_t n, double p,
                                                        double coverage);

// Standard normal quantile (inverse CDF).
double normal_quantile(double p);

}  // namespace flipaudit::stats
