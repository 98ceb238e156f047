#include "flipaudit/entailment.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

#include "flipaudit/text.hpp"

namespace flipaudit {

using nlohmann::json;

std::string to_string(EntailmentLabel l) {
  switch (l) {
    case EntailmentLabel::Entailment: return "entailment";
    case EntailmentLabel::Neutral: return "neutral";
    case EntailmentLabel::Contradiction: return "contradiction";
  }
  throw std::invalid_argument("unknown EntailmentLabel value");
}

EntailmentLabel entailment_label_from_string(std::string_view s) {
  if (s == "entailment") return EntailmentLabel::Entailment;
  if (s == "neutral") return EntailmentLabel::Neutral;
  if (s == "contradiction") return EntailmentLabel::Contradiction;
  throw std::invalid_argument("unknown entailment label: " + std::string(s));
}

std::string to_string(FlipClass c) {
  return c == FlipClass::Spurious ? "spurious" : "reasoned";
}

FlipClass flip_class_from_string(std::string_view s) {
  if (s == "spurious") return FlipClass::Spurious;
  if (s == "reasoned") return FlipClass::Reasoned;
  throw std::invalid_argument("unknown flip class: " + std::string(s));
}

namespace {

std::set<std::string> content_words(const std::string& text) {
  // Short function words carry no rationale content.
  static const std::set<std::string> stopwords = {
      "a",   "an",  "and", "are", "as",  "at",  "be", "by",  "for", "from",
      "in",  "is",  "it",  "its", "of",  "on",  "or", "the", "to",  "was",
      "we",  "with"};
  std::set<std::string> words;
  for (const Token& t : tokenize(text)) {
    std::string w = lowercase(t.core);
    if (stopwords.find(w) == stopwords.end()) words.insert(std::move(w));
  }
  return words;
}

}  // namespace

EntailmentVerdict KeywordOverlapEntailment::entail(const std::string& premise,
                                                   const std::string& hypothesis) {
  EntailmentVerdict v;
  v.premise = premise;
  v.hypothesis = hypothesis;

  std::set<std::string> p = content_words(premise);
  std::set<std::string> h = content_words(hypothesis);
  if (p.empty() && h.empty()) {
    v.label = EntailmentLabel::Entailment;
    v.score = 1.0;
    return v;
  }
  std::size_t intersection = 0;
  for (const auto& w : p)
    if (h.count(w)) ++intersection;
  std::size_t union_size = p.size() + h.size() - intersection;
  double jaccard = union_size == 0 ? 0.0
                                   : static_cast<double>(intersection) /
                                         static_cast<double>(union_size);
  v.score = jaccard;
  v.label = jaccard >= threshold_ ? EntailmentLabel::Entailment : EntailmentLabel::Neutral;
  return v;
}

HttpEntailmentProvider::HttpEntailmentProvider(std::string base_url,
                                               std::chrono::milliseconds timeout)
    : base_url_(std::move(base_url)), timeout_(timeout) {}

EntailmentVerdict HttpEntailmentProvider::entail(const std::string& premise,
                                                 const std::string& hypothesis) {
  std::size_t scheme_end = base_url_.find("://");
  if (scheme_end == std::string::npos)
    throw std::invalid_argument("entailment provider base_url must include a scheme");
  std::size_t path_start = base_url_.find('/', scheme_end + 3);
  std::string host = path_start == std::string::npos ? base_url_
                                                     : base_url_.substr(0, path_start);
  std::string prefix =
      path_start == std::string::npos ? "" : base_url_.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();

  httplib::Client client(host);
  client.set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout_));
  client.set_read_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout_));

  json body{{"premise", premise}, {"hypothesis", hypothesis}};
  auto result = client.Post(prefix + "/entail", body.dump(), "application/json");
  if (!result)
    throw std::runtime_error("entailment provider transport error: " +
                             httplib::to_string(result.error()));
  if (result->status < 200 || result->status >= 300)
    throw std::runtime_error("entailment provider HTTP " +
                             std::to_string(result->status));
  json parsed = json::parse(result->body, nullptr, false);
  if (parsed.is_discarded() || !parsed.contains("label") || !parsed.contains("score"))
    throw std::runtime_error("entailment provider returned malformed body");

  EntailmentVerdict v;
  v.premise = premise;
  v.hypothesis = hypothesis;
  v.label = entailment_label_from_string(parsed.at("label").get<std::string>());
  v.score = parsed.at("score").get<double>();
  return v;
}

EntailmentVerdict CachingEntailment::entail(const std::string& premise,
                                            const std::string& hypothesis) {
  std::string key = sha256_hex(premise + '\x1f' + hypothesis);
  {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
  }
  EntailmentVerdict v = inner_->entail(premise, hypothesis);
  std::lock_guard<std::mutex> lock(mutex_);
  cache_.emplace(std::move(key), v);
  return v;
}

std::size_t CachingEntailment::cache_size() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return cache_.size();
}

FlipClassification classify_flip(const std::string& pair_id,
                                 const std::string& base_rationale,
                                 const std::string& swap_rationale,
                                 EntailmentProvider& provider) {
  FlipClassification c;
  c.pair_id = pair_id;
  if (trim(base_rationale).empty() || trim(swap_rationale).empty()) {
    c.cls = FlipClass::Reasoned;
    c.empty_rationale_warning = true;
    return c;
  }
  c.forward = provider.entail(base_rationale, swap_rationale);
  c.backward = provider.entail(swap_rationale, base_rationale);
  bool mutual = c.forward.label == EntailmentLabel::Entailment &&
                c.backward.label == EntailmentLabel::Entailment;
  c.cls = mutual ? FlipClass::Spurious : FlipClass::Reasoned;
  return c;
}

ClassificationSummary summarize_classifications(
    const std::vector<ClassifiedFlip>& classifications,
    const std::vector<ModelFlipStats>& model_stats) {
  if (classifications.empty())
    throw std::invalid_argument("summarize_classifications: empty input");

  ClassificationSummary s;
  for (BiasType b : kAllBiasTypes) s.per_bias[b];  // report all groups
  for (const ClassifiedFlip& c : classifications) {
    ++s.overall.total;
    ++s.per_bias[c.bias_type].total;
    if (!c.tier.empty()) ++s.per_tier[c.tier].total;
    if (c.cls == FlipClass::Spurious) {
      ++s.overall.spurious;
      ++s.per_bias[c.bias_type].spurious;
      if (!c.tier.empty()) ++s.per_tier[c.tier].spurious;
    }
  }

  auto finish = [](ShareCell& cell) {
    if (cell.total > 0)
      cell.share = static_cast<double>(cell.spurious) / static_cast<double>(cell.total);
  };
  finish(s.overall);
  for (auto& [_, cell] : s.per_bias) finish(cell);
  for (auto& [_, cell] : s.per_tier) finish(cell);

  // Tier means aggregate the per-model rates as reported (one-decimal
  // percentages), so the summary echoes the headline numbers.
  std::map<std::string, std::pair<double, int>> tier_acc;
  for (const ModelFlipStats& m : model_stats) {
    if (m.n <= 0) continue;
    double rate_pct = static_cast<double>(m.k) / static_cast<double>(m.n) * 100.0;
    double reported = std::round(rate_pct * 10.0) / 10.0;
    auto& acc = tier_acc[m.tier];
    acc.first += reported;
    acc.second += 1;
  }
  for (const auto& [tier, acc] : tier_acc)
    s.tier_mean_flip_rate[tier] = acc.first / acc.second;
  return s;
}

namespace {

std::string share_str(const ShareCell& cell) {
  if (!cell.share) return "undefined";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.0f%% (%lld/%lld)", *cell.share * 100.0,
                static_cast<long long>(cell.spurious),
                static_cast<long long>(cell.total));
  return buf;
}

}  // namespace

std::string format_summary(const ClassificationSummary& s) {
  std::ostringstream os;
  os << "spurious share overall: " << share_str(s.overall) << '\n';
  for (const auto& [bias, cell] : s.per_bias)
    os << "  " << to_string(bias) << ": " << share_str(cell) << '\n';
  if (!s.per_tier.empty()) {
    os << "by tier:\n";
    for (const auto& [tier, cell] : s.per_tier)
      os << "  " << tier << ": " << share_str(cell) << '\n';
  }
  for (const auto& [tier, rate_pct] : s.tier_mean_flip_rate) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.1f%%", rate_pct);
    os << "mean flip rate, " << tier << ": " << buf << '\n';
  }
  return os.str();
}

}  // namespace flipaudit
