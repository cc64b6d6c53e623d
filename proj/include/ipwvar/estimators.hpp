#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "ipwvar/strata.hpp"

namespace ipwvar {

/// One observed unit: its stratum, treatment indicator and outcome.
struct Unit {
  std::string label;
  int z = 0;
  double y = 0.0;
};

// Per-stratum contrasts on sufficient statistics. Callers guarantee n1, n0 >= 1.

/// (p_hat / w) * Ybar1 - ((1 - p_hat) / (1 - w)) * Ybar0 for a putative propensity w.
inline double weighted_contrast(long n1, long n0, double sum1, double sum0, double w) noexcept {
  const double n = static_cast<double>(n1 + n0);
  const double p_hat = static_cast<double>(n1) / n;
  const double q_hat = static_cast<double>(n0) / n;
  return (p_hat / w) * (sum1 / static_cast<double>(n1)) -
         (q_hat / (1.0 - w)) * (sum0 / static_cast<double>(n0));
}

/// With w = p_hat the weights are identically one: Ybar1 - Ybar0.
inline double difference_in_means(long n1, long n0, double sum1, double sum0) noexcept {
  return sum1 / static_cast<double>(n1) - sum0 / static_cast<double>(n0);
}

/// (1/N) sum_i [ y z / w(x) - y (1 - z) / (1 - w(x)) ].
/// Throws std::invalid_argument for unknown labels, weights outside (0, 1),
/// z outside {0, 1}, or an empty unit list.
double ipw_unitwise(std::span<const Unit> units, const std::map<std::string, double>& weights);

/// Sufficient statistics of `units`, one sample per stratum of `pop` in
/// population order. Strata without units get zero counts.
Dataset aggregate_units(std::span<const Unit> units, const PopulationSpec& pop);

struct StratumContrast {
  std::string label;
  double weight = 0.0;    // N_x / N
  double contrast = 0.0;  // stratum-level estimate
};

struct EstimateResult {
  double tau_hat = 0.0;
  std::vector<StratumContrast> per_stratum;
};

/// sum_x (N_x / N) * contrast_x with w(x) = p(x) (TruePropensity),
/// w(x) = p_hat(x) (EstimatedPropensity), or the estimated-PS contrast on
/// strata merged by equal true propensity (HybridCollapsed).
///
/// Throws std::invalid_argument when a sample has an empty arm, when the
/// dataset is not aligned with `pop`, or when counts disagree with n_total.
EstimateResult stratified_estimate(const Dataset& data, WeightingScheme scheme,
                                   const PopulationSpec& pop);

/// |(N_a/N) tau_a + (N_b/N) tau_b - tau_pooled| for the true-PS contrast with
/// shared propensity p, where the dataset holds exactly two strata.
double collapse_identity_check(const Dataset& data, double p);

/// Same gap when the two strata carry their own propensities; the pooled cell
/// is weighted by the size-weighted propensity (N_a p_a + N_b p_b) / N. Only
/// zero in general when p_a == p_b.
double collapse_identity_check(const Dataset& data, double p_a, double p_b);

}  // namespace ipwvar
