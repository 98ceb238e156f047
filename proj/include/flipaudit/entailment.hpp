#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "flipaudit/types.hpp"

namespace flipaudit {

enum class EntailmentLabel { Entailment, Neutral, Contradiction };

std::string to_string(EntailmentLabel l);
EntailmentLabel entailment_label_from_string(std::string_view s);

struct EntailmentVerdict {
  std::string premise;
  std::string hypothesis;
  EntailmentLabel label = EntailmentLabel::Neutral;
  double score = 0.0;
};

// Pluggable premise→hypothesis classifier. Wire protocol for remote
// providers: POST /entail with {premise, hypothesis} → {label, score}.
class EntailmentProvider {
 public:
  virtual ~EntailmentProvider() = default;
  virtual EntailmentVerdict entail(const std::string& premise,
                                   const std::string& hypothesis) = 0;
};

// Deterministic test stub: Jaccard overlap of lowercase content words.
// Identical texts entail reflexively; keyword-disjoint texts never do.
class KeywordOverlapEntailment : public EntailmentProvider {
 public:
  explicit KeywordOverlapEntailment(double threshold = 0.6) : threshold_(threshold) {}
  EntailmentVerdict entail(const std::string& premise,
                           const std::string& hypothesis) override;

 private:
  double threshold_;
};

class HttpEntailmentProvider : public EntailmentProvider {
 public:
  explicit HttpEntailmentProvider(std::string base_url,
                                  std::chrono::milliseconds timeout =
                                      std::chrono::milliseconds{30000});
  EntailmentVerdict entail(const std::string& premise,
                           const std::string& hypothesis) override;

 private:
  std::string base_url_;
  std::chrono::milliseconds timeout_;
};

// Memoizes verdicts by (premise, hypothesis) fingerprint. Thread-safe.
class CachingEntailment : public EntailmentProvider {
 public:
  explicit CachingEntailment(std::shared_ptr<EntailmentProvider> inner)
      : inner_(std::move(inner)) {}
  EntailmentVerdict entail(const std::string& premise,
                           const std::string& hypothesis) override;
  std::size_t cache_size() const;

 private:
  std::shared_ptr<EntailmentProvider> inner_;
  mutable std::mutex mutex_;
  std::map<std::string, EntailmentVerdict> cache_;
};

enum class FlipClass { Spurious, Reasoned };

std::string to_string(FlipClass c);
FlipClass flip_class_from_string(std::string_view s);

struct FlipClassification {
  std::string pair_id;
  FlipClass cls = FlipClass::Reasoned;
  EntailmentVerdict forward;   // base rationale → swap rationale
  EntailmentVerdict backward;  // swap rationale → base rationale
  bool empty_rationale_warning = false;
};

// Spurious iff the two rationales mutually entail. An empty rationale skips
// the provider and classifies as reasoned with a warning flag.
FlipClassification classify_flip(const std::string& pair_id,
                                 const std::string& base_rationale,
                                 const std::string& swap_rationale,
                                 EntailmentProvider& provider);

struct ClassifiedFlip {
  std::string pair_id;
  std::string model;
  std::string tier;  // free-form grouping label, e.g. "frontier"
  BiasType bias_type = BiasType::Demographic;
  FlipClass cls = FlipClass::Reasoned;
};

// Flip counts per model, used for the tier-level mean flip rates.
struct ModelFlipStats {
  std::string model;
  std::string tier;
  std::int64_t k = 0;  // flips
  std::int64_t n = 0;  // included pairs
};

struct ShareCell {
  std::int64_t total = 0;
  std::int64_t spurious = 0;
  std::optional<double> share;  // undefined when total == 0
};

struct ClassificationSummary {
  ShareCell overall;
  std::map<BiasType, ShareCell> per_bias;
  std::map<std::string, ShareCell> per_tier;
  // Mean of per-model reported flip rates per tier, in one-decimal percent
  // units, when model stats are supplied.
  std::map<std::string, double> tier_mean_flip_rate;
};

ClassificationSummary summarize_classifications(
    const std::vector<ClassifiedFlip>& classifications,
    const std::vector<ModelFlipStats>& model_stats = {});

std::string format_summary(const ClassificationSummary& summary);

}  // namespace flipaudit
