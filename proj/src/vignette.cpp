#include "flipaudit/vignette.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "flipaudit/rng.hpp"

namespace flipaudit {

using nlohmann::json;

void validate(const VignettePair& pair) {
  if (pair.id.empty()) throw std::invalid_argument("vignette pair: empty id");
  if (pair.options.size() < 2)
    throw std::invalid_argument("pair '" + pair.id +
                                "': options must list at least 2 labels");
  std::set<std::string> distinct(pair.options.begin(), pair.options.end());
  if (distinct.size() != pair.options.size())
    throw std::invalid_argument("pair '" + pair.id + "': options contain duplicates");
  for (const auto& o : pair.options) {
    if (trim(o).empty())
      throw std::invalid_argument("pair '" + pair.id + "': options contain an empty label");
  }
  if (pair.provenance != Provenance::Control && pair.base_text == pair.swap_text)
    throw std::invalid_argument("pair '" + pair.id +
                                "': base_text equals swap_text");
  if (pair.base_text.empty())
    throw std::invalid_argument("pair '" + pair.id + "': empty base_text");
  if (pair.decision_prompt.empty())
    throw std::invalid_argument("pair '" + pair.id + "': empty decision_prompt");
}

void validate(const ControlPair& pair) {
  if (pair.id.empty()) throw std::invalid_argument("control pair: empty id");
  if (pair.options.size() < 2)
    throw std::invalid_argument("control '" + pair.id +
                                "': options must list at least 2 labels");
  if (pair.base_text == pair.variant_text)
    throw std::invalid_argument("control '" + pair.id +
                                "': variant_text equals base_text");

  auto base_tokens = tokenize(pair.base_text);
  auto variant_tokens = tokenize(pair.variant_text);
  if (pair.perturbation_kind == PerturbationKind::Punctuation) {
    if (base_tokens.size() != variant_tokens.size())
      throw std::invalid_argument("control '" + pair.id +
                                  "': punctuation variant changed token count");
    for (std::size_t i = 0; i < base_tokens.size(); ++i) {
      if (base_tokens[i].core != variant_tokens[i].core)
        throw std::invalid_argument("control '" + pair.id +
                                    "': punctuation variant changed word '" +
                                    base_tokens[i].core + "'");
    }
  } else {
    if (base_tokens.size() != variant_tokens.size())
      throw std::invalid_argument("control '" + pair.id +
                                  "': synonym variant changed token count");
    std::size_t differing = 0;
    for (std::size_t i = 0; i < base_tokens.size(); ++i) {
      if (lowercase(base_tokens[i].core) != lowercase(variant_tokens[i].core))
        ++differing;
    }
    if (differing != 1)
      throw std::invalid_argument("control '" + pair.id + "': synonym variant must differ in exactly one token, found " +
                                  std::to_string(differing));
  }
}

namespace {

json pair_to_json(const VignettePair& p) {
  return json{{"id", p.id},
              {"domain", to_string(p.domain)},
              {"bias_type", to_string(p.bias_type)},
              {"context", p.context},
              {"base_text", p.base_text},
              {"swap_text", p.swap_text},
              {"decision_prompt", p.decision_prompt},
              {"options", p.options},
              {"provenance", to_string(p.provenance)}};
}

VignettePair pair_from_json(const json& j) {
  VignettePair p;
  p.id = j.at("id").get<std::string>();
  p.domain = domain_from_string(j.at("domain").get<std::string>());
  p.bias_type = bias_type_from_string(j.at("bias_type").get<std::string>());
  p.context = j.value("context", "");
  p.base_text = j.at("base_text").get<std::string>();
  p.swap_text = j.at("swap_text").get<std::string>();
  p.decision_prompt = j.at("decision_prompt").get<std::string>();
  p.options = j.at("options").get<std::vector<std::string>>();
  p.provenance = provenance_from_string(j.at("provenance").get<std::string>());
  return p;
}

json control_to_json(const ControlPair& p) {
  return json{{"id", p.id},
              {"domain", to_string(p.domain)},
              {"base_text", p.base_text},
              {"variant_text", p.variant_text},
              {"decision_prompt", p.decision_prompt},
              {"options", p.options},
              {"perturbation_kind", to_string(p.perturbation_kind)}};
}

ControlPair control_from_json(const json& j) {
  ControlPair p;
  p.id = j.at("id").get<std::string>();
  p.domain = domain_from_string(j.at("domain").get<std::string>());
  p.base_text = j.at("base_text").get<std::string>();
  p.variant_text = j.at("variant_text").get<std::string>();
  p.decision_prompt = j.at("decision_prompt").get<std::string>();
  p.options = j.at("options").get<std::vector<std::string>>();
  p.perturbation_kind =
      perturbation_kind_from_string(j.at("perturbation_kind").get<std::string>());
  return p;
}

json read_header_line(const std::string& path, const std::string& line,
                      const std::string& expected_version) {
  json header = json::parse(line, nullptr, false);
  if (header.is_discarded() || !header.is_object() || !header.contains("schema_version"))
    throw std::runtime_error(path + ": line 1: expected schema_version header record");
  std::string version = header.at("schema_version").get<std::string>();
  if (version != expected_version)
    throw std::runtime_error(path + ": schema_version mismatch: file has '" + version +
                             "', expected '" + expected_version + "'");
  return header;
}

}  // namespace

std::vector<VignettePair> load_corpus(const std::string& path,
                                      const std::string& expected_schema_version) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus file: " + path);

  std::vector<VignettePair> pairs;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    if (!header_seen) {
      read_header_line(path, line, expected_schema_version);
      header_seen = true;
      continue;
    }
    json rec = json::parse(line, nullptr, false);
    if (rec.is_discarded() || !rec.is_object())
      throw std::runtime_error(path + ": line " + std::to_string(line_no) +
                               ": malformed record");
    try {
      VignettePair p = pair_from_json(rec);
      validate(p);
      pairs.push_back(std::move(p));
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ": line " + std::to_string(line_no) + ": " +
                               e.what());
    }
  }
  return pairs;
}

void save_corpus(const std::string& path, const std::vector<VignettePair>& pairs) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write corpus file: " + path);
  out << json{{"schema_version", std::string(kCorpusSchemaVersion)}}.dump() << '\n';
  for (const auto& p : pairs) {
    validate(p);
    out << pair_to_json(p).dump() << '\n';
  }
}

std::vector<ControlPair> load_control_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open control corpus: " + path);
  std::vector<ControlPair> pairs;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    if (!header_seen) {
      read_header_line(path, line, std::string(kCorpusSchemaVersion));
      header_seen = true;
      continue;
    }
    json rec = json::parse(line, nullptr, false);
    if (rec.is_discarded() || !rec.is_object())
      throw std::runtime_error(path + ": line " + std::to_string(line_no) +
                               ": malformed record");
    try {
      ControlPair p = control_from_json(rec);
      validate(p);
      pairs.push_back(std::move(p));
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ": line " + std::to_string(line_no) + ": " +
                               e.what());
    }
  }
  return pairs;
}

void save_control_corpus(const std::string& path, const std::vector<ControlPair>& pairs) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write control corpus: " + path);
  out << json{{"schema_version", std::string(kCorpusSchemaVersion)}}.dump() << '\n';
  for (const auto& p : pairs) out << control_to_json(p).dump() << '\n';
}

namespace {

struct TemplateSegment {
  bool is_slot = false;
  std::string text;  // literal text or slot name
};

std::vector<TemplateSegment> parse_template_text(const std::string& text) {
  std::vector<TemplateSegment> segments;
  std::string literal;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] == '{') {
      std::size_t close = text.find('}', i + 1);
      if (close == std::string::npos)
        throw std::invalid_argument("template: unterminated '{' at offset " +
                                    std::to_string(i));
      std::string name = text.substr(i + 1, close - i - 1);
      if (name.empty() ||
          !std::all_of(name.begin(), name.end(), [](char c) {
            return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
          }))
        throw std::invalid_argument("template: bad placeholder name '{" + name + "}'");
      if (!literal.empty()) {
        segments.push_back({false, literal});
        literal.clear();
      }
      segments.push_back({true, name});
      i = close + 1;
    } else {
      literal.push_back(text[i]);
      ++i;
    }
  }
  if (!literal.empty()) segments.push_back({false, literal});
  return segments;
}

struct RenderedText {
  std::string text;
  // Spans each slot occurrence landed on, in occurrence order.
  std::vector<std::pair<std::string, TextSpan>> slot_spans;
};

RenderedText render_segments(const std::vector<TemplateSegment>& segments,
                             const std::map<std::string, std::string>& values) {
  RenderedText out;
  for (const auto& seg : segments) {
    if (!seg.is_slot) {
      out.text += seg.text;
      continue;
    }
    auto it = values.find(seg.text);
    if (it == values.end())
      throw std::invalid_argument("template: unresolved placeholder '{" + seg.text +
                                  "}'");
    out.slot_spans.push_back({seg.text, TextSpan{out.text.size(), it->second.size()}});
    out.text += it->second;
  }
  return out;
}

}  // namespace

std::vector<std::string> template_placeholders(const VignetteTemplate& tmpl) {
  std::vector<std::string> names;
  for (const std::string& text : {tmpl.context, tmpl.body}) {
    for (const auto& seg : parse_template_text(text)) {
      if (seg.is_slot && std::find(names.begin(), names.end(), seg.text) == names.end())
        names.push_back(seg.text);
    }
  }
  return names;
}

InstantiatedPair instantiate_template(const VignetteTemplate& tmpl,
                                      const std::map<std::string, std::string>& slot_values,
                                      const InterventionSpec& intervention,
                                      const std::string& id) {
  validate(intervention);

  auto body_segments = parse_template_text(tmpl.body);
  auto context_segments = parse_template_text(tmpl.context);

  // Swap-side slot values: targeted slots take their paired replacement.
  std::set<std::string> body_slots;
  for (const auto& seg : body_segments)
    if (seg.is_slot) body_slots.insert(seg.text);

  std::map<std::string, std::string> swap_values = slot_values;
  std::size_t targeted = 0;
  for (const std::string& marker : intervention.target_markers) {
    auto it = slot_values.find(marker);
    if (it == slot_values.end() || body_slots.find(marker) == body_slots.end())
      continue;
    swap_values[marker] = paired_replacement(intervention, it->second);
    ++targeted;
  }
  if (targeted == 0)
    throw std::invalid_argument("intervention '" + intervention.name +
                                "' targets no slot in template");

  RenderedText base = render_segments(body_segments, slot_values);
  RenderedText swap = render_segments(body_segments, swap_values);
  RenderedText context = render_segments(context_segments, slot_values);

  InstantiatedPair result;
  result.pair.id = id;
  result.pair.domain = tmpl.domain;
  result.pair.bias_type = intervention.bias_type;
  result.pair.context = context.text;
  result.pair.base_text = base.text;
  result.pair.swap_text = swap.text;
  result.pair.decision_prompt = tmpl.decision_prompt;
  result.pair.options = tmpl.options;
  result.pair.provenance = Provenance::Template;

  for (std::size_t i = 0; i < base.slot_spans.size(); ++i) {
    const auto& [name, base_span] = base.slot_spans[i];
    const auto& [swap_name, swap_span] = swap.slot_spans[i];
    if (slot_values.at(name) == swap_values.at(name)) continue;
    ModifiedSpan span;
    span.before = base_span;
    span.after = swap_span;
    span.old_text = slot_values.at(name);
    span.new_text = swap_values.at(swap_name);
    result.swap_spans.push_back(std::move(span));
  }

  validate(result.pair);
  return result;
}

std::vector<TabularCaseRecord> load_tabular_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open tabular file: " + path);

  auto split_csv_line = [&](const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    bool in_quotes = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      char c = line[i];
      if (in_quotes) {
        if (c == '"') {
          if (i + 1 < line.size() && line[i + 1] == '"') {
            cell.push_back('"');
            ++i;
          } else {
            in_quotes = false;
          }
        } else {
          cell.push_back(c);
        }
      } else if (c == '"') {
        in_quotes = true;
      } else if (c == ',') {
        cells.push_back(cell);
        cell.clear();
      } else if (c != '\r') {
        cell.push_back(c);
      }
    }
    cells.push_back(cell);
    return cells;
  };

  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error(path + ": missing CSV header row");
  std::vector<std::string> header = split_csv_line(line);

  std::vector<TabularCaseRecord> records;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw std::runtime_error(path + ": line " + std::to_string(line_no) + ": has " +
                               std::to_string(cells.size()) + " cells, header has " +
                               std::to_string(header.size()));
    TabularCaseRecord rec;
    for (std::size_t i = 0; i < header.size(); ++i) rec[trim(header[i])] = cells[i];
    records.push_back(std::move(rec));
  }
  return records;
}

DeriveResult derive_from_tabular(const std::vector<TabularCaseRecord>& records,
                                 const VignetteTemplate& tmpl,
                                 const std::vector<InterventionSpec>& interventions,
                                 const std::map<BiasType, std::int64_t>& count_per_bias,
                                 std::uint64_t seed) {
  DeriveResult result;
  if (records.empty()) return result;

  auto spec_for = [&](BiasType b) -> const InterventionSpec* {
    for (const auto& s : interventions)
      if (s.bias_type == b) return &s;
    return nullptr;
  };

  std::vector<std::string> placeholders = template_placeholders(tmpl);

  for (const auto& [bias, requested] : count_per_bias) {
    if (requested <= 0) continue;
    const InterventionSpec* spec = spec_for(bias);
    if (spec == nullptr)
      throw std::invalid_argument("derive_from_tabular: no intervention for bias type " +
                                  to_string(bias));

    // Fields the record itself must supply: placeholders not bound to any
    // intervention slot.
    std::vector<std::string> record_fields;
    for (const auto& name : placeholders) {
      bool is_slot = false;
      for (const auto& s : interventions) {
        if (std::find(s.target_markers.begin(), s.target_markers.end(), name) !=
            s.target_markers.end()) {
          is_slot = true;
          break;
        }
      }
      if (!is_slot) record_fields.push_back(name);
    }

    DetRng rng(hash_combine(seed, "derive:" + to_string(bias)));
    std::vector<std::size_t> order = shuffled_indices(records.size(), rng);

    std::int64_t produced = 0;
    for (std::size_t idx : order) {
      if (produced >= requested) break;
      const TabularCaseRecord& rec = records[idx];

      bool usable = true;
      for (const auto& field : record_fields) {
        auto it = rec.find(field);
        if (it == rec.end() || trim(it->second).empty()) {
          result.warnings.push_back("record " + std::to_string(idx) +
                                    ": missing field '" + field + "', skipped");
          usable = false;
          break;
        }
      }
      if (!usable) continue;

      std::map<std::string, std::string> slot_values;
      for (const auto& field : record_fields) slot_values[field] = rec.at(field);
      for (const auto& s : interventions) {
        for (const auto& marker : s.target_markers) {
          if (std::find(placeholders.begin(), placeholders.end(), marker) ==
              placeholders.end())
            continue;
          if (&s == spec) {
            slot_values[marker] =
                s.base_pool[static_cast<std::size_t>(produced) % s.base_pool.size()];
          } else if (slot_values.find(marker) == slot_values.end()) {
            slot_values[marker] = s.base_pool.front();
          }
        }
      }

      std::string id = to_string(tmpl.domain) + "-" + to_string(bias) + "-" +
                       std::to_string(produced);
      InstantiatedPair inst = instantiate_template(tmpl, slot_values, *spec, id);
      inst.pair.provenance = Provenance::Tabular;
      result.pairs.push_back(std::move(inst.pair));
      ++produced;
    }
    if (produced < requested) result.shortfall[bias] = requested - produced;
  }
  return result;
}

}  // namespace flipaudit
