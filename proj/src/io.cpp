#include "ipwvar/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ipwvar {

namespace {

double number_field(const nlohmann::json& s, const char* key, std::size_t index) {
  auto it = s.find(key);
  if (it == s.end() || !it->is_number())
    throw std::invalid_argument("strata[" + std::to_string(index) + "]: field '" + key +
                                "' must be a number");
  return it->get<double>();
}

}  // namespace

PopulationSpec population_from_json(const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("strata") || !doc["strata"].is_array())
    throw std::invalid_argument("population document must be an object with a 'strata' array");
  PopulationSpec pop;
  std::size_t i = 0;
  for (const auto& s : doc["strata"]) {
    if (!s.is_object())
      throw std::invalid_argument("strata[" + std::to_string(i) + "] must be an object");
    StratumSpec spec;
    auto label = s.find("label");
    if (label == s.end() || !label->is_string())
      throw std::invalid_argument("strata[" + std::to_string(i) + "]: field 'label' must be a string");
    spec.label = label->get<std::string>();
    spec.p = number_field(s, "p", i);
    spec.mu1 = number_field(s, "mu1", i);
    spec.mu0 = number_field(s, "mu0", i);
    spec.var1 = number_field(s, "var1", i);
    spec.var0 = number_field(s, "var0", i);
    auto n = s.find("n_total");
    if (n == s.end() || !n->is_number_integer())
      throw std::invalid_argument("strata[" + std::to_string(i) +
                                  "]: field 'n_total' must be an integer");
    spec.n_total = n->get<long>();
    pop.strata.push_back(std::move(spec));
    ++i;
  }
  return pop;
}

nlohmann::json to_json(const PopulationSpec& pop) {
  auto strata = nlohmann::json::array();
  for (const auto& s : pop.strata)
    strata.push_back({{"label", s.label},
                      {"p", s.p},
                      {"mu1", s.mu1},
                      {"mu0", s.mu0},
                      {"var1", s.var1},
                      {"var0", s.var0},
                      {"n_total", s.n_total}});
  return {{"strata", std::move(strata)}};
}

PopulationSpec parse_population(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(std::string("malformed population JSON: ") + e.what());
  }
  return population_from_json(doc);
}

PopulationSpec load_population(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open population file '" + path.string() + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_population(buffer.str());
}

nlohmann::json to_json(const MonteCarloReport& report) {
  auto schemes = nlohmann::json::array();
  for (const auto& s : report.schemes)
    schemes.push_back({{"scheme", std::string(to_string(s.scheme))},
                       {"mean", s.mean},
                       {"mean_se", s.mean_se},
                       {"variance", s.variance},
                       {"variance_se", s.variance_se}});
  return {{"replications", report.replications},
          {"seed", report.master_seed},
          {"chunk_size", report.chunk_size},
          {"outcome_model", std::string(to_string(report.outcome_model))},
          {"schemes", std::move(schemes)}};
}

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace ipwvar
