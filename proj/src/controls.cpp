#include "flipaudit/controls.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <stdexcept>

#include "flipaudit/rng.hpp"

namespace flipaudit {

TextSpan targeted_region(const VignettePair& pair) {
  if (pair.base_text == pair.swap_text)
    throw std::invalid_argument("pair '" + pair.id +
                                "': no targeted region, sides are identical");
  TextSpan raw = diff_region(pair.base_text, pair.swap_text);

  // Snap outward to whole-token runs so substitutions never split a word.
  std::vector<Token> tokens = tokenize(pair.base_text);
  std::size_t begin = raw.begin;
  std::size_t end = raw.end();
  bool any = false;
  for (const Token& t : tokens) {
    bool intersects = t.run.begin < raw.end() && raw.begin < t.run.end();
    // A zero-length diff (pure insertion in the swap) anchors to the token
    // containing the insertion point.
    if (raw.length == 0)
      intersects = t.run.begin <= raw.begin && raw.begin <= t.run.end();
    if (intersects) {
      if (!any) {
        begin = t.run.begin;
        end = t.run.end();
        any = true;
      } else {
        begin = std::min(begin, t.run.begin);
        end = std::max(end, t.run.end());
      }
    }
  }
  if (!any)
    throw std::invalid_argument("pair '" + pair.id +
                                "': targeted region contains no token");
  return {begin, end - begin};
}

std::vector<ControlPerturbation> generate_controls(const VignettePair& pair, int m,
                                                   const std::vector<std::string>& vocabulary,
                                                   std::uint64_t seed) {
  if (m < 1) throw std::invalid_argument("generate_controls: m must be >= 1");
  if (vocabulary.empty())
    throw std::invalid_argument("generate_controls: vocabulary must be non-empty");

  TextSpan region = targeted_region(pair);
  std::vector<Token> all_tokens = tokenize(pair.base_text);
  std::vector<Token> region_tokens;
  for (const Token& t : all_tokens) {
    if (t.run.begin >= region.begin && t.run.end() <= region.end())
      region_tokens.push_back(t);
  }
  if (region_tokens.empty())
    throw std::invalid_argument("pair '" + pair.id +
                                "': targeted region shorter than 1 token");
  if (vocabulary.size() < region_tokens.size())
    throw std::invalid_argument(
        "generate_controls: vocabulary smaller than region token count (" +
        std::to_string(vocabulary.size()) + " < " +
        std::to_string(region_tokens.size()) + ")");

  std::vector<ControlPerturbation> variants;
  variants.reserve(static_cast<std::size_t>(m));
  std::uint64_t pair_seed = hash_combine(hash_combine(seed, pair.id), "controls");
  for (int v = 1; v <= m; ++v) {
    DetRng rng(hash_combine(pair_seed, static_cast<std::uint64_t>(v)));
    std::vector<std::size_t> picks =
        sample_without_replacement(vocabulary.size(), region_tokens.size(), rng);

    std::string text;
    text.reserve(pair.base_text.size());
    std::size_t cursor = 0;
    for (std::size_t i = 0; i < region_tokens.size(); ++i) {
      const Token& t = region_tokens[i];
      text.append(pair.base_text, cursor, t.core_span.begin - cursor);
      text.append(vocabulary[picks[i]]);
      cursor = t.core_span.end();
    }
    text.append(pair.base_text, cursor, std::string::npos);

    ControlPerturbation cp;
    cp.source_pair_id = pair.id;
    cp.variant_index = v;
    cp.perturbed_text = std::move(text);
    cp.region = region;
    variants.push_back(std::move(cp));
  }
  return variants;
}

namespace {

// Replace the token core at `span`, keeping the first letter's case.
std::string replace_core(const std::string& text, TextSpan span,
                         const std::string& replacement) {
  std::string word = replacement;
  if (!word.empty() && span.length > 0 &&
      std::isupper(static_cast<unsigned char>(text[span.begin])))
    word[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(word[0])));
  std::string out = text.substr(0, span.begin);
  out += word;
  out += text.substr(span.end());
  return out;
}

std::optional<std::string> synonym_variant(
    const std::string& base,
    const std::vector<std::pair<std::string, std::string>>& synonym_table, DetRng& rng) {
  std::vector<Token> tokens = tokenize(base);
  struct Candidate {
    TextSpan span;
    std::string synonym;
  };
  std::vector<Candidate> candidates;
  for (const Token& t : tokens) {
    std::string lower = lowercase(t.core);
    for (const auto& [word, synonym] : synonym_table) {
      if (lowercase(word) == lower && lowercase(synonym) != lower) {
        candidates.push_back({t.core_span, synonym});
        break;
      }
    }
  }
  if (candidates.empty()) return std::nullopt;
  const Candidate& pick = candidates[rng.below(candidates.size())];
  return replace_core(base, pick.span, pick.synonym);
}

std::string punctuation_variant(const std::string& base, DetRng& rng) {
  // Only punctuation outside token cores is fair game; a period inside
  // "3.5" is part of the word.
  std::vector<char> in_core(base.size(), 0);
  for (const Token& t : tokenize(base)) {
    for (std::size_t i = t.core_span.begin; i < t.core_span.end(); ++i) in_core[i] = 1;
  }
  std::vector<std::size_t> commas;
  std::vector<std::size_t> periods;
  for (std::size_t i = 0; i < base.size(); ++i) {
    if (in_core[i]) continue;
    if (base[i] == ',') commas.push_back(i);
    if (base[i] == '.') periods.push_back(i);
  }
  std::string variant = base;
  if (!commas.empty()) {
    variant[commas[rng.below(commas.size())]] = ';';
  } else if (!periods.empty()) {
    variant[periods[rng.below(periods.size())]] = '!';
  } else {
    variant += ".";
  }
  return variant;
}

}  // namespace

std::vector<ControlPair> generate_noise_controls(
    const std::vector<VignettePair>& corpus, int per_domain,
    const std::vector<std::pair<std::string, std::string>>& synonym_table,
    std::uint64_t seed, std::optional<std::vector<Domain>> domains) {
  if (per_domain < 0)
    throw std::invalid_argument("generate_noise_controls: per_domain must be >= 0");
  if (synonym_table.empty())
    throw std::invalid_argument("generate_noise_controls: synonym table is empty");
  if (per_domain == 0) return {};

  std::vector<Domain> requested;
  if (domains.has_value()) {
    requested = *domains;
  } else {
    for (Domain d : kAllDomains) {
      if (std::any_of(corpus.begin(), corpus.end(),
                      [&](const VignettePair& p) { return p.domain == d; }))
        requested.push_back(d);
    }
  }
  if (requested.empty())
    throw std::invalid_argument("generate_noise_controls: no domains requested");

  std::vector<ControlPair> out;
  for (Domain d : requested) {
    std::vector<const VignettePair*> eligible;
    for (const auto& p : corpus)
      if (p.domain == d) eligible.push_back(&p);
    if (eligible.empty())
      throw std::invalid_argument("generate_noise_controls: no eligible vignettes for domain " +
                                  to_string(d));

    for (int j = 0; j < per_domain; ++j) {
      DetRng rng(hash_combine(hash_combine(seed, "noise:" + to_string(d)),
                              static_cast<std::uint64_t>(j)));
      const VignettePair& src = *eligible[rng.below(eligible.size())];

      ControlPair cp;
      cp.id = to_string(d) + "-control-" + std::to_string(j);
      cp.domain = d;
      cp.base_text = src.base_text;
      cp.decision_prompt = src.decision_prompt;
      cp.options = src.options;

      std::optional<std::string> variant;
      if (j % 2 == 1) {
        variant = synonym_variant(src.base_text, synonym_table, rng);
        if (variant) cp.perturbation_kind = PerturbationKind::Synonym;
      }
      if (!variant) {
        cp.perturbation_kind = PerturbationKind::Punctuation;
        variant = punctuation_variant(src.base_text, rng);
      }
      cp.variant_text = *variant;
      validate(cp);
      out.push_back(std::move(cp));
    }
  }
  return out;
}

std::vector<std::string> load_vocabulary(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open vocabulary file: " + path);
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    std::string word = trim(line);
    if (word.empty() || word[0] == '#') continue;
    if (word.find_first_of(" \t") != std::string::npos)
      throw std::runtime_error("vocabulary entry contains whitespace: '" + word + "'");
    words.push_back(word);
  }
  return words;
}

std::vector<std::string> filter_vocabulary(const std::vector<std::string>& vocabulary,
                                           const std::vector<InterventionSpec>& specs) {
  std::set<std::string> forbidden;
  for (const auto& spec : specs) {
    for (const auto* pool : {&spec.base_pool, &spec.swap_pool}) {
      for (const auto& entry : *pool) {
        for (const Token& t : tokenize(entry)) forbidden.insert(lowercase(t.core));
      }
    }
  }
  std::vector<std::string> kept;
  for (const auto& w : vocabulary) {
    if (forbidden.find(lowercase(w)) == forbidden.end()) kept.push_back(w);
  }
  return kept;
}

std::vector<std::pair<std::string, std::string>> load_synonym_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open synonym table: " + path);
  std::vector<std::pair<std::string, std::string>> table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    nlohmann::json rec = nlohmann::json::parse(line, nullptr, false);
    if (rec.is_discarded() || !rec.is_object() || !rec.contains("word") ||
        !rec.contains("synonym"))
      throw std::runtime_error(path + ": line " + std::to_string(line_no) +
                               ": expected {word, synonym} record");
    table.push_back({rec.at("word").get<std::string>(),
                     rec.at("synonym").get<std::string>()});
  }
  return table;
}

}  // namespace flipaudit
