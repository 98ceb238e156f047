#include "flipaudit/stats.hpp"

#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/beta.hpp>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <stdexcept>

namespace flipaudit::stats {

std::string to_string(FlipIndicator f) {
  switch (f) {
    case FlipIndicator::Flip: return "flip";
    case FlipIndicator::NoFlip: return "no_flip";
    case FlipIndicator::Excluded: return "excluded";
  }
  throw std::invalid_argument("unknown FlipIndicator value");
}

FlipIndicator flip_indicator_from_string(std::string_view s) {
  if (s == "flip") return FlipIndicator::Flip;
  if (s == "no_flip") return FlipIndicator::NoFlip;
  if (s == "excluded") return FlipIndicator::Excluded;
  throw std::invalid_argument("unknown flip indicator: " + std::string(s));
}

FlipCounts flip_rate(const std::vector<FlipIndicator>& indicators) {
  FlipCounts c;
  for (FlipIndicator f : indicators) {
    switch (f) {
      case FlipIndicator::Flip:
        ++c.n;
        ++c.k;
        break;
      case FlipIndicator::NoFlip:
        ++c.n;
        break;
      case FlipIndicator::Excluded:
        ++c.excluded;
        break;
    }
  }
  if (c.n == 0)
    throw std::invalid_argument("flip_rate: no non-excluded indicators");
  c.rate = static_cast<double>(c.k) / static_cast<double>(c.n);
  return c;
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw std::invalid_argument("normal_quantile: p must be in (0,1)");
  boost::math::normal_distribution<double> dist;
  return boost::math::quantile(dist, p);
}

Interval wilson_interval(std::int64_t k, std::int64_t n, double confidence) {
  if (n < 1) throw std::invalid_argument("wilson_interval: n must be >= 1");
  if (k < 0 || k > n)
    throw std::invalid_argument("wilson_interval: k must be in [0, n]");
  if (!(confidence > 0.0 && confidence < 1.0))
    throw std::invalid_argument("wilson_interval: confidence must be in (0,1)");

  const double z = normal_quantile(0.5 + confidence / 2.0);
  const double nn = static_cast<double>(n);
  const double p_hat = static_cast<double>(k) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double center = p_hat + z2 / (2.0 * nn);
  const double half = z * std::sqrt(p_hat * (1.0 - p_hat) / nn + z2 / (4.0 * nn * nn));

  Interval iv;
  iv.low = std::clamp((center - half) / denom, 0.0, 1.0);
  iv.high = std::clamp((center + half) / denom, 0.0, 1.0);
  // At the boundary counts the exact bound is 0 (resp. 1); don't let
  // floating-point residue of center-minus-half leak through.
  if (k == 0) iv.low = 0.0;
  if (k == n) iv.high = 1.0;
  return iv;
}

double binomial_test_exceeds(std::int64_t k, std::int64_t n, double p0) {
  if (n < 1) throw std::invalid_argument("binomial_test_exceeds: n must be >= 1");
  if (k < 0 || k > n)
    throw std::invalid_argument("binomial_test_exceeds: k must be in [0, n]");
  if (!(p0 > 0.0 && p0 < 1.0))
    throw std::invalid_argument("binomial_test_exceeds: p0 must be in (0,1)");

  if (k == 0) return 1.0;
  // P[X >= k] = I_{p0}(k, n - k + 1), the regularized incomplete beta.
  return boost::math::ibeta(static_cast<double>(k),
                            static_cast<double>(n - k + 1), p0);
}

WinRateResult win_rate(const std::vector<int>& targeted,
                       const std::vector<std::vector<int>>& controls) {
  if (targeted.empty())
    throw std::invalid_argument("win_rate: empty input");
  if (targeted.size() != controls.size())
    throw std::invalid_argument("win_rate: targeted/controls length mismatch");

  const std::size_t m = controls.front().size();
  if (m == 0) throw std::invalid_argument("win_rate: controls must be non-empty");

  WinRateResult r;
  r.n = static_cast<std::int64_t>(targeted.size());
  r.m = static_cast<std::int64_t>(m);
  for (std::size_t i = 0; i < targeted.size(); ++i) {
    if (controls[i].size() != m)
      throw std::invalid_argument("win_rate: ragged control lists");
    int d = targeted[i];
    if (d != 0 && d != 1)
      throw std::invalid_argument("win_rate: indicators must be 0/1");
    double sum = 0.0;
    for (int c : controls[i]) {
      if (c != 0 && c != 1)
        throw std::invalid_argument("win_rate: indicators must be 0/1");
      sum += c;
    }
    double mean = sum / static_cast<double>(m);
    if (static_cast<double>(d) > mean) ++r.win_count;
  }
  r.win_rate = static_cast<double>(r.win_count) / static_cast<double>(r.n);
  r.p_value = binomial_test_exceeds(r.win_count, r.n, 0.5);
  return r;
}

FdrOutcome bh_fdr(const std::vector<double>& p_values, double q) {
  if (p_values.empty()) throw std::invalid_argument("bh_fdr: empty p-value list");
  if (!(q > 0.0 && q < 1.0))
    throw std::invalid_argument("bh_fdr: q must be in (0,1)");
  for (double p : p_values) {
    if (!(p >= 0.0 && p <= 1.0))
      throw std::invalid_argument("bh_fdr: p-values must be in [0,1]");
  }

  const std::size_t K = p_values.size();
  std::vector<std::size_t> order(K);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return p_values[a] < p_values[b]; });

  FdrOutcome out;
  out.q = q;
  out.sorted_p.reserve(K);
  for (std::size_t idx : order) out.sorted_p.push_back(p_values[idx]);

  out.k_star = 0;
  for (std::size_t i = K; i >= 1; --i) {
    double threshold = (static_cast<double>(i) / static_cast<double>(K)) * q;
    if (out.sorted_p[i - 1] <= threshold) {
      out.k_star = i;
      break;
    }
  }

  out.rejected.assign(K, false);
  for (std::size_t i = 0; i < out.k_star; ++i) out.rejected[order[i]] = true;
  return out;
}

NoiseBaseline noise_baseline(
    const std::map<Domain, std::vector<FlipIndicator>>& control_indicators) {
  if (control_indicators.empty())
    throw std::invalid_argument("noise_baseline: no control indicators");

  NoiseBaseline b;
  for (const auto& [domain, indicators] : control_indicators) {
    bool any_included =
        std::any_of(indicators.begin(), indicators.end(),
                    [](FlipIndicator f) { return f != FlipIndicator::Excluded; });
    if (!any_included)
      throw std::invalid_argument("noise_baseline: no control pairs for domain " +
                                  flipaudit::to_string(domain));
    FlipCounts c = flip_rate(indicators);
    b.pooled_n += c.n;
    b.pooled_k += c.k;
    b.per_domain[domain] = c;
  }
  b.pooled_rate = static_cast<double>(b.pooled_k) / static_cast<double>(b.pooled_n);
  return b;
}

CellStats make_cell_stats(Domain domain, BiasType bias_type,
                          const std::string& model,
                          const std::vector<FlipIndicator>& indicators,
                          double p0, double confidence) {
  FlipCounts c = flip_rate(indicators);
  CellStats cs;
  cs.domain = domain;
  cs.bias_type = bias_type;
  cs.model = model;
  cs.n = c.n;
  cs.k = c.k;
  cs.flip_rate = c.rate;
  cs.excluded = c.excluded;
  Interval iv = wilson_interval(c.k, c.n, confidence);
  cs.wilson_low = iv.low;
  cs.wilson_high = iv.high;
  cs.p_value = binomial_test_exceeds(c.k, c.n, p0);
  return cs;
}

void apply_fdr(std::vector<CellStats>& cells, double q) {
  if (cells.empty()) return;
  std::vector<double> ps;
  ps.reserve(cells.size());
  for (const auto& c : cells) ps.push_back(c.p_value);
  FdrOutcome fdr = bh_fdr(ps, q);
  for (std::size_t i = 0; i < cells.size(); ++i)
    cells[i].rejected_after_fdr = fdr.rejected[i];
}

void write_cell_stats_csv(std::ostream& os, const std::vector<CellStats>& cells) {
  os << "domain,bias_type,model,n,k,flip_rate,wilson_low,wilson_high,"
        "p_value,rejected_after_fdr,excluded\n";
  os << std::setprecision(10);
  for (const auto& c : cells) {
    os << flipaudit::to_string(c.domain) << ',' << flipaudit::to_string(c.bias_type)
       << ',' << c.model << ',' << c.n << ',' << c.k << ',' << c.flip_rate << ','
       << c.wilson_low << ',' << c.wilson_high << ',' << c.p_value << ','
       << (c.rejected_after_fdr ? "true" : "false") << ',' << c.excluded << '\n';
  }
}

std::pair<std::int64_t, std::int64_t> binomial_envelope(std::int64_t n, double p,
                                                        double coverage) {
  if (n < 1) throw std::invalid_argument("binomial_envelope: n must be >= 1");
  if (!(p >= 0.0 && p <= 1.0))
    throw std::invalid_argument("binomial_envelope: p must be in [0,1]");
  if (!(coverage > 0.0 && coverage < 1.0))
    throw std::invalid_argument("binomial_envelope: coverage must be in (0,1)");

  if (p == 0.0) return {0, 0};
  if (p == 1.0) return {n, n};

  const double tail = (1.0 - coverage) / 2.0;
  boost::math::binomial_distribution<double> dist(static_cast<double>(n), p);
  std::int64_t lo = 0;
  while (lo < n && boost::math::cdf(dist, static_cast<double>(lo)) < tail) ++lo;
  std::int64_t hi = lo;
  while (hi < n && boost::math::cdf(dist, static_cast<double>(hi)) < 1.0 - tail) ++hi;
  return {lo, hi};
}

}  // namespace flipaudit::stats
