#pragma once

#include <map>
#include <string>
#include <vector>

#include "flipaudit/text.hpp"
#include "flipaudit/types.hpp"

namespace flipaudit {

enum class Pairing { Indexed, Random };

std::string to_string(Pairing p);
Pairing pairing_from_string(std::string_view s);

// A named swap rule: which spans to target and what to substitute.
// `target_markers` entries are either slot names (resolved through the
// caller's slot bindings) or literal spans looked up directly in the text.
// With indexed pairing, base_pool[i] swaps with swap_pool[i]; curated pairs
// like culturally coded names are authored that way. Random pairing picks a
// swap-pool entry by a stable hash of the matched text.
struct InterventionSpec {
  BiasType bias_type = BiasType::Demographic;
  std::string name;
  std::vector<std::string> target_markers;
  std::vector<std::string> base_pool;
  std::vector<std::string> swap_pool;
  Pairing pairing = Pairing::Indexed;
};

// Throws std::invalid_argument on violated invariants (empty pools,
// indexed pools of unequal length, no markers).
void validate(const InterventionSpec& spec);

struct ModifiedSpan {
  TextSpan before;  // span in the input text
  TextSpan after;   // span in the output text
  std::string old_text;
  std::string new_text;
};

struct InterventionResult {
  std::string text;
  std::vector<ModifiedSpan> spans;  // ascending, non-overlapping
};

// Applies the swap rule to base_text. Every occurrence of each resolved
// marker is replaced; the output differs from the input only within the
// returned spans. Markers that resolve to text absent from base_text, or
// to text not present in either pool, raise an error naming the marker.
InterventionResult apply_intervention(
    const std::string& base_text, const InterventionSpec& spec,
    const std::map<std::string, std::string>& slot_bindings = {});

// The swap-side counterpart of a base-pool value (or the reverse when the
// value sits in the swap pool). Throws when the value is in neither pool.
std::string paired_replacement(const InterventionSpec& spec, const std::string& value);

// Occurrences of pool entries in `text` (whole-string scan, longest match
// first). Used to check that re-deriving spans on swapped text finds exactly
// the swapped-in values.
std::vector<std::pair<std::string, TextSpan>> locate_pool_entries(
    const std::string& text, const std::vector<std::string>& pool);

// Swap-pool file: one JSON record per line {bias_type, name, base, swap}.
// Records sharing (bias_type, name) aggregate into one indexed-pairing spec
// whose default target marker is the record name.
std::vector<InterventionSpec> load_swap_pools(const std::string& path);
void save_swap_pools(const std::string& path, const std::vector<InterventionSpec>& specs);

}  // namespace flipaudit
