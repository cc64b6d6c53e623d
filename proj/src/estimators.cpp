#include "ipwvar/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ipwvar {

namespace {

void require_both_arms(const StratumSample& s) {
  if (s.n1 < 1 || s.n0 < 1)
    throw std::invalid_argument("stratum '" + s.label + "' has an empty arm (n1=" +
                                std::to_string(s.n1) + ", n0=" + std::to_string(s.n0) + ")");
}

EstimateResult estimate_aligned(const Dataset& data, const PopulationSpec& pop,
                                WeightingScheme scheme) {
  const double big_n = static_cast<double>(data.total_size());
  EstimateResult out;
  out.per_stratum.reserve(pop.strata.size());
  for (const auto& spec : pop.strata) {
    const auto* s = data.find(spec.label);
    if (s == nullptr)
      throw std::invalid_argument("dataset has no sample for stratum '" + spec.label + "'");
    require_both_arms(*s);
    if (s->n_total() != spec.n_total)
      throw std::invalid_argument("stratum '" + spec.label + "' has " +
                                  std::to_string(s->n_total()) + " units but n_total is " +
                                  std::to_string(spec.n_total));
    const double contrast = scheme == WeightingScheme::TruePropensity
                                ? weighted_contrast(s->n1, s->n0, s->sum1, s->sum0, spec.p)
                                : difference_in_means(s->n1, s->n0, s->sum1, s->sum0);
    const double weight = static_cast<double>(s->n_total()) / big_n;
    out.tau_hat += weight * contrast;
    out.per_stratum.push_back({spec.label, weight, contrast});
  }
  return out;
}

}  // namespace

double ipw_unitwise(std::span<const Unit> units, const std::map<std::string, double>& weights) {
  if (units.empty()) throw std::invalid_argument("ipw_unitwise: no units");
  double acc = 0.0;
  for (const auto& u : units) {
    auto it = weights.find(u.label);
    if (it == weights.end())
      throw std::invalid_argument("ipw_unitwise: no weight for stratum '" + u.label + "'");
    const double w = it->second;
    if (!(w > 0.0 && w < 1.0))
      throw std::invalid_argument("ipw_unitwise: weight for '" + u.label + "' outside (0, 1)");
    if (u.z != 0 && u.z != 1) throw std::invalid_argument("ipw_unitwise: treatment must be 0 or 1");
    acc += u.y * u.z / w - u.y * (1 - u.z) / (1.0 - w);
  }
  return acc / static_cast<double>(units.size());
}

Dataset aggregate_units(std::span<const Unit> units, const PopulationSpec& pop) {
  Dataset out;
  for (const auto& s : pop.strata) out.samples.push_back({s.label, 0, 0, 0.0, 0.0});
  for (const auto& u : units) {
    auto it = std::find_if(out.samples.begin(), out.samples.end(),
                           [&](const StratumSample& s) { return s.label == u.label; });
    if (it == out.samples.end())
      throw std::invalid_argument("unit references unknown stratum '" + u.label + "'");
    if (u.z == 1) {
      ++it->n1;
      it->sum1 += u.y;
    } else if (u.z == 0) {
      ++it->n0;
      it->sum0 += u.y;
    } else {
      throw std::invalid_argument("treatment must be 0 or 1");
    }
  }
  return out;
}

EstimateResult stratified_estimate(const Dataset& data, WeightingScheme scheme,
                                   const PopulationSpec& pop) {
  if (data.samples.size() != pop.strata.size())
    throw std::invalid_argument("dataset has " + std::to_string(data.samples.size()) +
                                " strata, population has " + std::to_string(pop.strata.size()));
  if (scheme != WeightingScheme::HybridCollapsed) return estimate_aligned(data, pop, scheme);

  // Validate the un-merged cells first so an empty arm is reported by its own label.
  for (const auto& s : data.samples) require_both_arms(s);
  const auto collapsed = collapse_by_propensity(pop);
  return estimate_aligned(collapse_dataset(data, collapsed.grouping), collapsed.population,
                          WeightingScheme::EstimatedPropensity);
}

double collapse_identity_check(const Dataset& data, double p) {
  return collapse_identity_check(data, p, p);
}

double collapse_identity_check(const Dataset& data, double p_a, double p_b) {
  if (data.samples.size() != 2)
    throw std::invalid_argument("collapse_identity_check needs exactly two strata, got " +
                                std::to_string(data.samples.size()));
  const auto& a = data.samples[0];
  const auto& b = data.samples[1];
  require_both_arms(a);
  require_both_arms(b);
  const double na = static_cast<double>(a.n_total());
  const double nb = static_cast<double>(b.n_total());
  const double big_n = na + nb;
  const double separate = na / big_n * weighted_contrast(a.n1, a.n0, a.sum1, a.sum0, p_a) +
                          nb / big_n * weighted_contrast(b.n1, b.n0, b.sum1, b.sum0, p_b);
  const double p_pooled = p_a == p_b ? p_a : (na * p_a + nb * p_b) / big_n;
  const double pooled =
      weighted_contrast(a.n1 + b.n1, a.n0 + b.n0, a.sum1 + b.sum1, a.sum0 + b.sum0, p_pooled);
  return std::abs(separate - pooled);
}

}  // namespace ipwvar
