#include "flipaudit/text.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cctype>
#include <stdexcept>

namespace flipaudit {

bool is_punct_char(char c) {
  return std::ispunct(static_cast<unsigned char>(c)) != 0;
}

static bool is_space_char(char c) {
  return std::isspace(static_cast<unsigned char>(c)) != 0;
}

std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space_char(text[i])) ++i;
    if (i >= text.size()) break;
    std::size_t start = i;
    while (i < text.size() && !is_space_char(text[i])) ++i;
    std::size_t core_begin = start;
    std::size_t core_end = i;
    while (core_begin < core_end && is_punct_char(text[core_begin])) ++core_begin;
    while (core_end > core_begin && is_punct_char(text[core_end - 1])) --core_end;
    if (core_begin == core_end) continue;  // pure punctuation run
    Token t;
    t.run = {start, i - start};
    t.core_span = {core_begin, core_end - core_begin};
    t.core = std::string(text.substr(core_begin, core_end - core_begin));
    out.push_back(std::move(t));
  }
  return out;
}

TextSpan diff_region(std::string_view base, std::string_view variant) {
  std::size_t min_len = std::min(base.size(), variant.size());
  std::size_t prefix = 0;
  while (prefix < min_len && base[prefix] == variant[prefix]) ++prefix;
  std::size_t suffix = 0;
  while (suffix < min_len - prefix &&
         base[base.size() - 1 - suffix] == variant[variant.size() - 1 - suffix])
    ++suffix;
  return {prefix, base.size() - suffix - prefix};
}

std::string lowercase(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && is_space_char(s[b])) ++b;
  while (e > b && is_space_char(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

static bool is_word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) != 0;
}

std::size_t find_word(std::string_view text, std::string_view word) {
  if (word.empty()) return std::string_view::npos;
  std::size_t pos = 0;
  while ((pos = text.find(word, pos)) != std::string_view::npos) {
    bool left_ok = pos == 0 || !is_word_char(text[pos - 1]);
    std::size_t after = pos + word.size();
    bool right_ok = after >= text.size() || !is_word_char(text[after]);
    if (left_ok && right_ok) return pos;
    ++pos;
  }
  return std::string_view::npos;
}

bool contains_word(std::string_view text, std::string_view word) {
  return find_word(text, word) != std::string_view::npos;
}

std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : data) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t hash_combine(std::uint64_t seed, std::string_view data) {
  return mix64(seed ^ fnv1a64(data));
}

std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t value) {
  return mix64(seed ^ mix64(value));
}

double unit_interval(std::uint64_t h) {
  // Top 53 bits give a uniform double in [0, 1).
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256: EVP_Digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

}  // namespace flipaudit
