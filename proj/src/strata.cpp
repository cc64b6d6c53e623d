#include "ipwvar/strata.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

namespace ipwvar {

long PopulationSpec::total_size() const noexcept {
  long n = 0;
  for (const auto& s : strata) n += s.n_total;
  return n;
}

const StratumSpec* PopulationSpec::find(std::string_view label) const noexcept {
  auto it = std::find_if(strata.begin(), strata.end(),
                         [&](const StratumSpec& s) { return s.label == label; });
  return it == strata.end() ? nullptr : &*it;
}

long Dataset::total_size() const noexcept {
  long n = 0;
  for (const auto& s : samples) n += s.n_total();
  return n;
}

const StratumSample* Dataset::find(std::string_view label) const noexcept {
  auto it = std::find_if(samples.begin(), samples.end(),
                         [&](const StratumSample& s) { return s.label == label; });
  return it == samples.end() ? nullptr : &*it;
}

std::string_view to_string(WeightingScheme scheme) noexcept {
  switch (scheme) {
    case WeightingScheme::TruePropensity: return "true";
    case WeightingScheme::EstimatedPropensity: return "estimated";
    case WeightingScheme::HybridCollapsed: return "hybrid";
  }
  return "unknown";
}

WeightingScheme parse_scheme(std::string_view name) {
  if (name == "true") return WeightingScheme::TruePropensity;
  if (name == "estimated") return WeightingScheme::EstimatedPropensity;
  if (name == "hybrid") return WeightingScheme::HybridCollapsed;
  throw std::invalid_argument("unknown weighting scheme '" + std::string(name) +
                              "' (expected true, estimated or hybrid)");
}

ValidationResult validate(const PopulationSpec& pop) {
  ValidationResult out;
  if (pop.strata.empty()) {
    out.push_back({"", "empty", "population has no strata"});
    return out;
  }
  std::set<std::string> seen;
  for (const auto& s : pop.strata) {
    if (!seen.insert(s.label).second)
      out.push_back({s.label, "duplicate label", "label '" + s.label + "' appears more than once"});
    if (!std::isfinite(s.p) || !std::isfinite(s.mu1) || !std::isfinite(s.mu0) ||
        !std::isfinite(s.var1) || !std::isfinite(s.var0))
      out.push_back({s.label, "finite", "all numeric fields must be finite"});
    if (!(s.p > 0.0 && s.p < 1.0))
      out.push_back({s.label, "positivity", "propensity must lie strictly inside (0, 1)"});
    if (s.var1 < 0.0 || s.var0 < 0.0)
      out.push_back({s.label, "variance", "outcome variances must be non-negative"});
    if (s.n_total < 2)
      out.push_back({s.label, "cell size",
                     "n_total must be at least 2 to hold the forced treated-control pair"});
  }
  return out;
}

void require_valid(const PopulationSpec& pop) {
  auto v = validate(pop);
  if (!v.empty()) {
    std::string where = v.front().stratum.empty() ? "" : " in stratum '" + v.front().stratum + "'";
    throw std::invalid_argument("invalid population: " + v.front().kind + where + ": " +
                                v.front().message);
  }
}

const std::string& GroupingMap::merged_label(std::string_view original) const {
  for (const auto& g : groups)
    for (const auto& m : g.members)
      if (m == original) return g.label;
  throw std::out_of_range("label '" + std::string(original) + "' is not part of the grouping");
}

bool GroupingMap::is_identity() const noexcept {
  return std::all_of(groups.begin(), groups.end(),
                     [](const StratumGroup& g) { return g.members.size() == 1; });
}

namespace {

// Size-weighted mean; returns the common value unchanged when all members agree.
template <class Get>
double pooled_mean(const std::vector<const StratumSpec*>& cells, Get get) {
  const double first = get(*cells.front());
  if (std::all_of(cells.begin(), cells.end(), [&](auto* c) { return get(*c) == first; }))
    return first;
  double num = 0.0, den = 0.0;
  for (auto* c : cells) {
    num += static_cast<double>(c->n_total) * get(*c);
    den += static_cast<double>(c->n_total);
  }
  return num / den;
}

template <class GetMu, class GetVar>
double pooled_variance(const std::vector<const StratumSpec*>& cells, double mixture_mean,
                       GetMu mu, GetVar var) {
  const double m0 = mu(*cells.front());
  const double v0 = var(*cells.front());
  if (std::all_of(cells.begin(), cells.end(),
                  [&](auto* c) { return mu(*c) == m0 && var(*c) == v0; }))
    return v0;
  double num = 0.0, den = 0.0;
  for (auto* c : cells) {
    const double d = mu(*c) - mixture_mean;
    num += static_cast<double>(c->n_total) * (var(*c) + d * d);
    den += static_cast<double>(c->n_total);
  }
  return num / den;
}

}  // namespace

CollapsedPopulation collapse_by_propensity(const PopulationSpec& pop) {
  if (pop.strata.empty()) throw std::invalid_argument("cannot collapse an empty population");

  CollapsedPopulation out;
  std::vector<double> group_p;
  for (std::size_t i = 0; i < pop.strata.size(); ++i) {
    const auto& s = pop.strata[i];
    auto it = std::find(group_p.begin(), group_p.end(), s.p);
    if (it == group_p.end()) {
      group_p.push_back(s.p);
      out.grouping.groups.push_back({s.label, {s.label}, {i}});
    } else {
      auto& g = out.grouping.groups[static_cast<std::size_t>(it - group_p.begin())];
      g.members.push_back(s.label);
      g.member_indices.push_back(i);
      g.label += "+" + s.label;
    }
  }

  for (const auto& g : out.grouping.groups) {
    std::vector<const StratumSpec*> cells;
    for (auto i : g.member_indices) cells.push_back(&pop.strata[i]);
    if (cells.size() == 1) {
      out.population.strata.push_back(*cells.front());
      continue;
    }
    StratumSpec merged;
    merged.label = g.label;
    merged.p = cells.front()->p;
    merged.n_total = 0;
    for (auto* c : cells) merged.n_total += c->n_total;
    merged.mu1 = pooled_mean(cells, [](const StratumSpec& c) { return c.mu1; });
    merged.mu0 = pooled_mean(cells, [](const StratumSpec& c) { return c.mu0; });
    merged.var1 = pooled_variance(
        cells, merged.mu1, [](const StratumSpec& c) { return c.mu1; },
        [](const StratumSpec& c) { return c.var1; });
    merged.var0 = pooled_variance(
        cells, merged.mu0, [](const StratumSpec& c) { return c.mu0; },
        [](const StratumSpec& c) { return c.var0; });
    out.population.strata.push_back(std::move(merged));
  }
  return out;
}

Dataset collapse_dataset(const Dataset& data, const GroupingMap& grouping) {
  std::size_t members = 0;
  for (const auto& g : grouping.groups) members += g.members.size();
  if (members != data.samples.size())
    throw std::invalid_argument("dataset has " + std::to_string(data.samples.size()) +
                                " strata but the grouping covers " + std::to_string(members));

  Dataset out;
  out.samples.reserve(grouping.groups.size());
  for (const auto& g : grouping.groups) {
    StratumSample merged;
    merged.label = g.label;
    for (const auto& m : g.members) {
      const auto* s = data.find(m);
      if (s == nullptr)
        throw std::invalid_argument("dataset has no sample for stratum '" + m + "'");
      merged.n1 += s->n1;
      merged.n0 += s->n0;
      merged.sum1 += s->sum1;
      merged.sum0 += s->sum0;
    }
    out.samples.push_back(std::move(merged));
  }
  return out;
}

}  // namespace ipwvar
