#include "flipaudit/parsing.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>

#include "flipaudit/text.hpp"

namespace flipaudit {

std::string to_string(Side s) { return s == Side::Base ? "base" : "swap"; }

Side side_from_string(std::string_view s) {
  if (s == "base") return Side::Base;
  if (s == "swap") return Side::Swap;
  throw std::invalid_argument("unknown side: " + std::string(s));
}

std::string to_string(ParseMethod m) {
  switch (m) {
    case ParseMethod::ExactLabel: return "exact_label";
    case ParseMethod::LetterPrefix: return "letter_prefix";
    case ParseMethod::FuzzyOption: return "fuzzy_option";
    case ParseMethod::Unparsed: return "unparsed";
  }
  throw std::invalid_argument("unknown ParseMethod value");
}

ParseMethod parse_method_from_string(std::string_view s) {
  if (s == "exact_label") return ParseMethod::ExactLabel;
  if (s == "letter_prefix") return ParseMethod::LetterPrefix;
  if (s == "fuzzy_option") return ParseMethod::FuzzyOption;
  if (s == "unparsed") return ParseMethod::Unparsed;
  throw std::invalid_argument("unknown parse_method: " + std::string(s));
}

std::string to_string(FeatureValidation v) {
  switch (v) {
    case FeatureValidation::Valid: return "valid";
    case FeatureValidation::MissingFields: return "missing_fields";
    case FeatureValidation::BadCategory: return "bad_category";
    case FeatureValidation::BadJson: return "bad_json";
  }
  throw std::invalid_argument("unknown FeatureValidation value");
}

FeatureValidation feature_validation_from_string(std::string_view s) {
  if (s == "valid") return FeatureValidation::Valid;
  if (s == "missing_fields") return FeatureValidation::MissingFields;
  if (s == "bad_category") return FeatureValidation::BadCategory;
  if (s == "bad_json") return FeatureValidation::BadJson;
  throw std::invalid_argument("unknown feature validation: " + std::string(s));
}

namespace {

// Label equality for the exact tier: whitespace-trimmed, trailing sentence
// punctuation dropped, case-insensitive.
std::string normalize_label(std::string_view s) {
  std::string t = trim(s);
  while (!t.empty() && (t.back() == '.' || t.back() == '!' || t.back() == ':'))
    t.pop_back();
  return lowercase(trim(t));
}

struct TierMatch {
  int option = kUnparsed;
  std::size_t span_end = 0;  // rationale starts here
};

std::optional<TierMatch> exact_tier(const std::string& raw,
                                    const std::vector<std::string>& options,
                                    bool& tie) {
  std::string norm = normalize_label(raw);
  std::set<int> hits;
  for (std::size_t i = 0; i < options.size(); ++i) {
    if (normalize_label(options[i]) == norm) hits.insert(static_cast<int>(i));
  }
  if (hits.size() > 1) {
    tie = true;
    return std::nullopt;
  }
  if (hits.size() == 1) return TierMatch{*hits.begin(), raw.size()};
  return std::nullopt;
}

bool is_word_boundary_left(const std::string& text, std::size_t pos) {
  return pos == 0 || !std::isalnum(static_cast<unsigned char>(text[pos - 1]));
}

// Letter-reference forms: "(a)", "a)", "A." — case-insensitive, at a word
// boundary, letter within the option range.
std::optional<TierMatch> letter_tier(const std::string& raw, std::size_t n_options,
                                     bool& tie) {
  struct Hit {
    std::size_t pos;
    std::size_t end;
    int option;
  };
  std::vector<Hit> hits;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    char c = raw[i];
    if (c == '(') {
      if (i + 2 < raw.size() && std::isalpha(static_cast<unsigned char>(raw[i + 1])) &&
          raw[i + 2] == ')') {
        int opt = std::tolower(static_cast<unsigned char>(raw[i + 1])) - 'a';
        if (opt >= 0 && opt < static_cast<int>(n_options))
          hits.push_back({i, i + 3, opt});
      }
      continue;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) && is_word_boundary_left(raw, i) &&
        i + 1 < raw.size() && (raw[i + 1] == ')' || raw[i + 1] == '.')) {
      int opt = std::tolower(static_cast<unsigned char>(c)) - 'a';
      if (opt >= 0 && opt < static_cast<int>(n_options))
        hits.push_back({i, i + 2, opt});
    }
  }
  if (hits.empty()) return std::nullopt;
  std::set<int> distinct;
  for (const Hit& h : hits) distinct.insert(h.option);
  if (distinct.size() > 1) {
    tie = true;
    return std::nullopt;
  }
  return TierMatch{hits.front().option, hits.front().end};
}

std::optional<TierMatch> fuzzy_tier(const std::string& raw,
                                    const std::vector<std::string>& options,
                                    bool& tie) {
  std::string lower = lowercase(raw);
  struct Hit {
    std::size_t pos;
    std::size_t end;
    int option;
  };
  std::vector<Hit> hits;
  for (std::size_t i = 0; i < options.size(); ++i) {
    std::string needle = lowercase(options[i]);
    if (needle.empty()) continue;
    std::size_t pos = find_word(lower, needle);
    if (pos != std::string::npos)
      hits.push_back({pos, pos + needle.size(), static_cast<int>(i)});
  }
  if (hits.empty()) return std::nullopt;
  std::set<int> distinct;
  for (const Hit& h : hits) distinct.insert(h.option);
  if (distinct.size() > 1) {
    tie = true;
    return std::nullopt;
  }
  std::sort(hits.begin(), hits.end(),
            [](const Hit& a, const Hit& b) { return a.pos < b.pos; });
  return TierMatch{hits.front().option, hits.front().end};
}

std::string rationale_after(const std::string& raw, std::size_t span_end) {
  std::string_view rest(raw);
  rest.remove_prefix(std::min(span_end, raw.size()));
  std::size_t b = 0;
  while (b < rest.size() &&
         (std::isspace(static_cast<unsigned char>(rest[b])) || rest[b] == '-' ||
          rest[b] == ':' || rest[b] == ',' || rest[b] == '.')) {
    ++b;
  }
  std::string out = trim(rest.substr(b));
  return out.empty() ? raw : out;
}

}  // namespace

DecisionRecord parse_decision(const std::string& raw_text,
                              const std::vector<std::string>& options) {
  if (options.empty())
    throw std::invalid_argument("parse_decision: options must be non-empty");

  DecisionRecord rec;
  rec.raw_text = raw_text;
  rec.rationale = raw_text;

  std::string stripped = trim(raw_text);
  if (stripped.empty()) return rec;

  bool tie = false;
  std::optional<TierMatch> m = exact_tier(raw_text, options, tie);
  ParseMethod method = ParseMethod::ExactLabel;
  if (!m && !tie) {
    m = letter_tier(raw_text, options.size(), tie);
    method = ParseMethod::LetterPrefix;
  }
  if (!m && !tie) {
    m = fuzzy_tier(raw_text, options, tie);
    method = ParseMethod::FuzzyOption;
  }
  if (!m) return rec;  // tie or nothing matched → UNPARSED

  rec.decision = m->option;
  rec.parse_method = method;
  rec.rationale = rationale_after(raw_text, m->span_end);
  return rec;
}

namespace {

// Drop markdown code-fence lines, keep their contents.
std::string strip_fences(const std::string& text) {
  if (text.find("```") == std::string::npos) return text;
  std::istringstream in(text);
  std::string line;
  std::string out;
  while (std::getline(in, line)) {
    if (trim(line).rfind("```", 0) == 0) continue;
    out += line;
    out += '\n';
  }
  return out;
}

// First balanced-brace object, respecting JSON string literals.
std::optional<std::string> first_json_object(const std::string& text) {
  std::size_t start = text.find('{');
  if (start == std::string::npos) return std::nullopt;
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = start; i < text.size(); ++i) {
    char c = text[i];
    if (in_string) {
      if (escaped)
        escaped = false;
      else if (c == '\\')
        escaped = true;
      else if (c == '"')
        in_string = false;
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      --depth;
      if (depth == 0) return text.substr(start, i - start + 1);
    }
  }
  return std::nullopt;
}

std::string json_value_to_string(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

}  // namespace

ExtractedFeatures parse_features(const std::string& raw_text,
                                 const std::string& schema_id,
                                 const std::vector<FeatureField>& fields) {
  if (fields.empty())
    throw std::invalid_argument("parse_features: schema must declare fields");

  ExtractedFeatures out;
  out.schema_id = schema_id;
  out.validation = FeatureValidation::BadJson;

  std::optional<std::string> obj = first_json_object(strip_fences(raw_text));
  if (!obj) return out;

  nlohmann::json parsed = nlohmann::json::parse(*obj, nullptr, false);
  if (parsed.is_discarded() || !parsed.is_object()) return out;

  std::vector<std::string> missing;
  std::vector<std::string> bad_category;
  for (const FeatureField& f : fields) {
    auto it = parsed.find(f.name);
    if (it == parsed.end()) {
      missing.push_back(f.name);
      continue;
    }
    std::string value = json_value_to_string(*it);
    if (f.categorical) {
      std::string lower = lowercase(trim(value));
      auto match = std::find_if(f.allowed.begin(), f.allowed.end(),
                                [&](const std::string& a) { return lowercase(a) == lower; });
      if (match == f.allowed.end()) {
        bad_category.push_back(f.name);
        continue;
      }
      out.values[f.name] = *match;  // canonical spelling
    } else {
      out.values[f.name] = value;
    }
  }

  if (!missing.empty()) {
    out.validation = FeatureValidation::MissingFields;
    out.problems = std::move(missing);
  } else if (!bad_category.empty()) {
    out.validation = FeatureValidation::BadCategory;
    out.problems = std::move(bad_category);
  } else {
    out.validation = FeatureValidation::Valid;
  }
  return out;
}

stats::FlipIndicator record_flip(const DecisionRecord& base,
                                 const DecisionRecord& swap) {
  if (base.pair_id != swap.pair_id)
    throw std::invalid_argument("record_flip: mismatched pair ids '" + base.pair_id +
                                "' vs '" + swap.pair_id + "'");
  if (base.decision == kUnparsed || swap.decision == kUnparsed)
    return stats::FlipIndicator::Excluded;
  return base.decision != swap.decision ? stats::FlipIndicator::Flip
                                        : stats::FlipIndicator::NoFlip;
}

}  // namespace flipaudit
