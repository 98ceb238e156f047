#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "flipaudit/vignette.hpp"

namespace flipaudit {

// One randomized same-region perturbation of a vignette's base text.
struct ControlPerturbation {
  std::string source_pair_id;
  int variant_index = 1;  // 1..m
  std::string perturbed_text;
  TextSpan region;  // targeted swap region within base_text, token-aligned
};

// The targeted swap region of a pair: the base/swap diff snapped outward to
// whole-token boundaries. Throws when the pair's sides are identical or the
// region holds no token.
TextSpan targeted_region(const VignettePair& pair);

// Exactly m perturbations of pair.base_text with every region token's core
// replaced by a vocabulary word (sampled without replacement per variant).
// Text outside the region is untouched; token count inside is preserved.
// Seed stream is (seed, pair id, variant index) so per-pair regeneration is
// stable regardless of batch composition.
std::vector<ControlPerturbation> generate_controls(const VignettePair& pair, int m,
                                                   const std::vector<std::string>& vocabulary,
                                                   std::uint64_t seed);

// Near-identical control pairs for the noise baseline: per_domain pairs per
// requested domain (default: every domain present in the corpus), alternating
// punctuation edits and single-word synonym substitutions. A requested domain
// with no eligible vignettes is an error naming the domain.
std::vector<ControlPair> generate_noise_controls(
    const std::vector<VignettePair>& corpus, int per_domain,
    const std::vector<std::pair<std::string, std::string>>& synonym_table,
    std::uint64_t seed, std::optional<std::vector<Domain>> domains = std::nullopt);

// Vocabulary file: one word per line. Entries containing whitespace are
// rejected; blank lines and '#' comments are skipped.
std::vector<std::string> load_vocabulary(const std::string& path);

// Drops vocabulary words that appear (case-insensitively) inside any pool
// entry of any spec, so controls can never reproduce a targeted swap.
std::vector<std::string> filter_vocabulary(const std::vector<std::string>& vocabulary,
                                           const std::vector<InterventionSpec>& specs);

// Synonym table: one JSON record per line {word, synonym}.
std::vector<std::pair<std::string, std::string>> load_synonym_table(const std::string& path);

}  // namespace flipaudit
