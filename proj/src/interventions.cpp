#include "flipaudit/interventions.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <stdexcept>

namespace flipaudit {

std::string to_string(Pairing p) {
  return p == Pairing::Indexed ? "indexed" : "random";
}

Pairing pairing_from_string(std::string_view s) {
  if (s == "indexed") return Pairing::Indexed;
  if (s == "random") return Pairing::Random;
  throw std::invalid_argument("unknown pairing: " + std::string(s));
}

void validate(const InterventionSpec& spec) {
  if (spec.name.empty())
    throw std::invalid_argument("intervention spec: name required");
  if (spec.base_pool.empty() || spec.swap_pool.empty())
    throw std::invalid_argument("intervention '" + spec.name +
                                "': base_pool and swap_pool must be non-empty");
  if (spec.pairing == Pairing::Indexed &&
      spec.base_pool.size() != spec.swap_pool.size())
    throw std::invalid_argument("intervention '" + spec.name +
                                "': indexed pairing requires pools of equal length");
  if (spec.target_markers.empty())
    throw std::invalid_argument("intervention '" + spec.name +
                                "': targets no slot or span");
}

std::string paired_replacement(const InterventionSpec& spec, const std::string& value) {
  auto base_it = std::find(spec.base_pool.begin(), spec.base_pool.end(), value);
  if (base_it != spec.base_pool.end()) {
    if (spec.pairing == Pairing::Indexed)
      return spec.swap_pool[static_cast<std::size_t>(base_it - spec.base_pool.begin())];
    return spec.swap_pool[fnv1a64(value) % spec.swap_pool.size()];
  }
  auto swap_it = std::find(spec.swap_pool.begin(), spec.swap_pool.end(), value);
  if (swap_it != spec.swap_pool.end()) {
    if (spec.pairing == Pairing::Indexed)
      return spec.base_pool[static_cast<std::size_t>(swap_it - spec.swap_pool.begin())];
    return spec.base_pool[fnv1a64(value) % spec.base_pool.size()];
  }
  throw std::invalid_argument("intervention '" + spec.name + "': value '" + value +
                              "' not present in base_pool or swap_pool");
}

InterventionResult apply_intervention(
    const std::string& base_text, const InterventionSpec& spec,
    const std::map<std::string, std::string>& slot_bindings) {
  validate(spec);

  struct PendingEdit {
    std::size_t begin;
    std::string old_text;
    std::string new_text;
  };
  std::vector<PendingEdit> edits;

  for (const std::string& marker : spec.target_markers) {
    auto bound = slot_bindings.find(marker);
    const std::string literal = bound != slot_bindings.end() ? bound->second : marker;
    if (literal.empty())
      throw std::invalid_argument("intervention '" + spec.name + "': marker '" +
                                  marker + "' resolves to empty text");
    std::size_t pos = 0;
    bool found = false;
    while ((pos = base_text.find(literal, pos)) != std::string::npos) {
      found = true;
      edits.push_back({pos, literal, paired_replacement(spec, literal)});
      pos += literal.size();
    }
    if (!found)
      throw std::invalid_argument("intervention '" + spec.name +
                                  "': marker '" + marker + "' not found in text");
  }

  std::sort(edits.begin(), edits.end(),
            [](const PendingEdit& a, const PendingEdit& b) { return a.begin < b.begin; });
  for (std::size_t i = 1; i < edits.size(); ++i) {
    if (edits[i].begin < edits[i - 1].begin + edits[i - 1].old_text.size())
      throw std::invalid_argument("intervention '" + spec.name +
                                  "': overlapping marker matches");
  }

  InterventionResult result;
  result.text.reserve(base_text.size());
  std::size_t cursor = 0;
  for (const PendingEdit& e : edits) {
    result.text.append(base_text, cursor, e.begin - cursor);
    ModifiedSpan span;
    span.before = {e.begin, e.old_text.size()};
    span.after = {result.text.size(), e.new_text.size()};
    span.old_text = e.old_text;
    span.new_text = e.new_text;
    result.text.append(e.new_text);
    result.spans.push_back(std::move(span));
    cursor = e.begin + e.old_text.size();
  }
  result.text.append(base_text, cursor, std::string::npos);
  return result;
}

std::vector<std::pair<std::string, TextSpan>> locate_pool_entries(
    const std::string& text, const std::vector<std::string>& pool) {
  // Longest entries first so nested entries don't shadow full matches.
  std::vector<std::string> ordered = pool;
  std::sort(ordered.begin(), ordered.end(),
            [](const std::string& a, const std::string& b) { return a.size() > b.size(); });

  std::vector<std::pair<std::string, TextSpan>> found;
  std::vector<char> claimed(text.size(), 0);
  for (const std::string& entry : ordered) {
    if (entry.empty()) continue;
    std::size_t pos = 0;
    while ((pos = text.find(entry, pos)) != std::string::npos) {
      bool overlaps = false;
      for (std::size_t i = pos; i < pos + entry.size() && !overlaps; ++i)
        overlaps = claimed[i] != 0;
      if (!overlaps) {
        for (std::size_t i = pos; i < pos + entry.size(); ++i) claimed[i] = 1;
        found.push_back({entry, TextSpan{pos, entry.size()}});
      }
      pos += entry.size();
    }
  }
  std::sort(found.begin(), found.end(), [](const auto& a, const auto& b) {
    return a.second.begin < b.second.begin;
  });
  return found;
}

std::vector<InterventionSpec> load_swap_pools(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open swap-pool file: " + path);

  std::vector<InterventionSpec> specs;
  auto find_spec = [&](BiasType b, const std::string& name) -> InterventionSpec& {
    for (auto& s : specs) {
      if (s.bias_type == b && s.name == name) return s;
    }
    InterventionSpec s;
    s.bias_type = b;
    s.name = name;
    s.target_markers = {name};
    s.pairing = Pairing::Indexed;
    specs.push_back(std::move(s));
    return specs.back();
  };

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    nlohmann::json rec = nlohmann::json::parse(line, nullptr, false);
    if (rec.is_discarded() || !rec.is_object())
      throw std::runtime_error(path + ": line " + std::to_string(line_no) +
                               ": malformed swap-pool record");
    try {
      BiasType b = bias_type_from_string(rec.at("bias_type").get<std::string>());
      InterventionSpec& spec = find_spec(b, rec.at("name").get<std::string>());
      spec.base_pool.push_back(rec.at("base").get<std::string>());
      spec.swap_pool.push_back(rec.at("swap").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(path + ": line " + std::to_string(line_no) + ": " +
                               e.what());
    }
  }
  for (const auto& s : specs) validate(s);
  return specs;
}

void save_swap_pools(const std::string& path, const std::vector<InterventionSpec>& specs) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write swap-pool file: " + path);
  for (const auto& spec : specs) {
    for (std::size_t i = 0; i < spec.base_pool.size(); ++i) {
      nlohmann::json rec{{"bias_type", to_string(spec.bias_type)},
                         {"name", spec.name},
                         {"base", spec.base_pool[i]},
                         {"swap", spec.swap_pool[i]}};
      out << rec.dump() << '\n';
    }
  }
}

}  // namespace flipaudit
