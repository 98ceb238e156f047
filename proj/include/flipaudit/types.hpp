#pragma once

#include <array>
#include <string>
#include <string_view>

namespace flipaudit {

// The ten decision domains covered by the benchmark.
enum class Domain {
  CriminalJustice,
  Hiring,
  Healthcare,
  Lending,
  Education,
  Insurance,
  Legal,
  ContentModeration,
  Finance,
  CustomerService,
};

inline constexpr std::array<Domain, 10> kAllDomains = {
    Domain::CriminalJustice, Domain::Hiring,  Domain::Healthcare,
    Domain::Lending,         Domain::Education, Domain::Insurance,
    Domain::Legal,           Domain::ContentModeration, Domain::Finance,
    Domain::CustomerService,
};

enum class BiasType { Demographic, Authority, Framing };

inline constexpr std::array<BiasType, 3> kAllBiasTypes = {
    BiasType::Demographic, BiasType::Authority, BiasType::Framing};

enum class Provenance { Template, Tabular, Control };

enum class PerturbationKind { Punctuation, Synonym };

std::string to_string(Domain d);
std::string to_string(BiasType b);
std::string to_string(Provenance p);
std::string to_string(PerturbationKind k);

// Throw std::invalid_argument on unknown names.
Domain domain_from_string(std::string_view s);
BiasType bias_type_from_string(std::string_view s);
Provenance provenance_from_string(std::string_view s);
PerturbationKind perturbation_kind_from_string(std::string_view s);

inline constexpr std::string_view kVersion = "0.1.0";

}  // namespace flipaudit
