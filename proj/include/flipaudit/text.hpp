#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace flipaudit {

struct TextSpan {
  std::size_t begin = 0;
  std::size_t length = 0;

  std::size_t end() const { return begin + length; }
  bool operator==(const TextSpan&) const = default;
};

// One whitespace-delimited token. `run` covers the full non-space run,
// `core` is the run with leading/trailing punctuation stripped, and
// `core_span` locates the core within the original text. Runs whose core
// is empty (pure punctuation) are not tokens.
struct Token {
  std::string core;
  TextSpan run;
  TextSpan core_span;
};

// The module-wide tokenizer: whitespace-delimited, punctuation stripped.
// Every token-count rule in the codebase uses this one definition.
std::vector<Token> tokenize(std::string_view text);

// Region of `base` that differs from `variant`: everything between the
// longest common prefix and the longest common suffix. Empty span (length 0,
// begin = common prefix length) when the strings are equal.
TextSpan diff_region(std::string_view base, std::string_view variant);

bool is_punct_char(char c);

std::string lowercase(std::string_view s);
std::string trim(std::string_view s);
bool contains_word(std::string_view text, std::string_view word);
// Byte offset of `word` as a whole word in `text`, or npos.
std::size_t find_word(std::string_view text, std::string_view word);

// Deterministic 64-bit hashing (FNV-1a with a splitmix64 finalizer).
// Used wherever a reproducible, platform-independent stream of draws is
// needed; std::hash gives no such guarantee.
std::uint64_t fnv1a64(std::string_view data);
std::uint64_t mix64(std::uint64_t x);
std::uint64_t hash_combine(std::uint64_t seed, std::string_view data);
std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t value);
// Map a hash to [0, 1).
double unit_interval(std::uint64_t h);

// Hex-encoded SHA-256, used for request fingerprints and corpus hashes.
std::string sha256_hex(std::string_view data);

}  // namespace flipaudit
