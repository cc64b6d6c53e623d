#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

#include "ipwvar/simulate.hpp"
#include "ipwvar/strata.hpp"

namespace ipwvar {

/// Population document:
///   {"strata":[{"label":str,"p":float,"mu1":float,"mu0":float,
///               "var1":float,"var0":float,"n_total":int}, ...]}
/// Missing or mistyped fields throw std::invalid_argument. Invariants are not
/// checked here; see validate().
PopulationSpec population_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const PopulationSpec& pop);

/// Parses JSON text; syntax errors surface as std::invalid_argument.
PopulationSpec parse_population(std::string_view text);
PopulationSpec load_population(const std::filesystem::path& path);

nlohmann::json to_json(const MonteCarloReport& report);

/// Shortest form is not required: 17 significant digits, '.' decimal point.
std::string format_double(double x);

}  // namespace ipwvar
