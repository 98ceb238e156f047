#include "flipaudit/types.hpp"

#include <stdexcept>

namespace flipaudit {

std::string to_string(Domain d) {
  switch (d) {
    case Domain::CriminalJustice: return "criminal_justice";
    case Domain::Hiring: return "hiring";
    case Domain::Healthcare: return "healthcare";
    case Domain::Lending: return "lending";
    case Domain::Education: return "education";
    case Domain::Insurance: return "insurance";
    case Domain::Legal: return "legal";
    case Domain::ContentModeration: return "content_moderation";
    case Domain::Finance: return "finance";
    case Domain::CustomerService: return "customer_service";
  }
  throw std::invalid_argument("unknown Domain value");
}

std::string to_string(BiasType b) {
  switch (b) {
    case BiasType::Demographic: return "demographic";
    case BiasType::Authority: return "authority";
    case BiasType::Framing: return "framing";
  }
  throw std::invalid_argument("unknown BiasType value");
}

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::Template: return "template";
    case Provenance::Tabular: return "tabular";
    case Provenance::Control: return "control";
  }
  throw std::invalid_argument("unknown Provenance value");
}

std::string to_string(PerturbationKind k) {
  switch (k) {
    case PerturbationKind::Punctuation: return "punctuation";
    case PerturbationKind::Synonym: return "synonym";
  }
  throw std::invalid_argument("unknown PerturbationKind value");
}

Domain domain_from_string(std::string_view s) {
  for (Domain d : kAllDomains) {
    if (to_string(d) == s) return d;
  }
  throw std::invalid_argument("unknown domain: " + std::string(s));
}

BiasType bias_type_from_string(std::string_view s) {
  for (BiasType b : kAllBiasTypes) {
    if (to_string(b) == s) return b;
  }
  throw std::invalid_argument("unknown bias_type: " + std::string(s));
}

Provenance provenance_from_string(std::string_view s) {
  if (s == "template") return Provenance::Template;
  if (s == "tabular") return Provenance::Tabular;
  if (s == "control") return Provenance::Control;
  throw std::invalid_argument("unknown provenance: " + std::string(s));
}

PerturbationKind perturbation_kind_from_string(std::string_view s) {
  if (s == "punctuation") return PerturbationKind::Punctuation;
  if (s == "synonym") return PerturbationKind::Synonym;
  throw std::invalid_argument("unknown perturbation_kind: " + std::string(s));
}

}  // namespace flipaudit
