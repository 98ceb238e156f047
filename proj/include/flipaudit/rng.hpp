#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "flipaudit/text.hpp"

namespace flipaudit {

// Deterministic splitmix64 stream. Unlike std::shuffle /
// uniform_int_distribution, every draw is specified bit-for-bit, so seeded
// derivations are reproducible across platforms and standard libraries.
class DetRng {
 public:
  explicit DetRng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix64(state_);
  }

  // Unbiased draw in [0, bound) via rejection.
  std::uint64_t below(std::uint64_t bound) {
    if (bound == 0) throw std::invalid_argument("DetRng::below: bound must be > 0");
    std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      std::uint64_t r = next();
      if (r >= threshold) return r % bound;
    }
  }

  double unit() { return unit_interval(next()); }

 private:
  std::uint64_t state_;
};

// Fisher-Yates with DetRng draws.
template <typename T>
void deterministic_shuffle(std::vector<T>& items, DetRng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(items[i - 1], items[j]);
  }
}

inline std::vector<std::size_t> shuffled_indices(std::size_t n, DetRng& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  deterministic_shuffle(idx, rng);
  return idx;
}

// Sample k distinct indices from [0, n) without replacement.
inline std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k,
                                                           DetRng& rng) {
  if (k > n)
    throw std::invalid_argument("sample_without_replacement: k exceeds population");
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return idx;
}

}  // namespace flipaudit
