#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "ipwvar/strata.hpp"

namespace ipwvar {

using Rng = std::mt19937_64;

enum class OutcomeModel { Gaussian, TwoPoint };

std::string_view to_string(OutcomeModel model) noexcept;
/// Accepts "gaussian" or "two-point"; throws std::invalid_argument otherwise.
OutcomeModel parse_outcome_model(std::string_view name);

struct SimConfig {
  std::uint64_t replications = 10'000;
  std::uint64_t master_seed = 0;
  OutcomeModel outcome_model = OutcomeModel::Gaussian;
  std::uint64_t chunk_size = 4096;
  unsigned threads = 1;  // 0 = hardware concurrency; never affects results
};

/// Seed of the generator for one chunk, a splitmix64 mix of (master seed, chunk index).
std::uint64_t chunk_seed(std::uint64_t master_seed, std::uint64_t chunk_index) noexcept;

struct Assignment {
  long n1 = 1;
  long n0 = 1;
};

/// Forced-pair assignment: n1 = 1 + Bin(n_total - 2, p), n0 = n_total - n1.
Assignment draw_assignment(const StratumSpec& s, Rng& rng);

/// Outcome sums (sum1, sum0) of n1 treated and n0 control i.i.d. draws.
/// Gaussian draws N(mu, var); TwoPoint draws mu +/- sqrt(var) with equal probability.
std::pair<double, double> draw_outcomes(const StratumSpec& s, long n1, long n0, OutcomeModel model,
                                        Rng& rng);

struct SchemeSummary {
  WeightingScheme scheme = WeightingScheme::EstimatedPropensity;
  double mean = 0.0;
  double mean_se = 0.0;
  double variance = 0.0;
  double variance_se = 0.0;
};

struct MonteCarloReport {
  std::uint64_t replications = 0;
  std::uint64_t master_seed = 0;
  std::uint64_t chunk_size = 0;
  OutcomeModel outcome_model = OutcomeModel::Gaussian;
  std::vector<SchemeSummary> schemes;

  const SchemeSummary& at(WeightingScheme scheme) const;
};

/// Replicates the sampling design `config.replications` times and summarizes
/// each scheme's estimator. Every scheme sees the same draws. The result is a
/// deterministic function of (pop, schemes, config) minus `config.threads`.
MonteCarloReport run_monte_carlo(const PopulationSpec& pop, std::span<const WeightingScheme> schemes,
                                 const SimConfig& config);

enum class SweepParameter { Propensity, MeanShift };

std::string_view to_string(SweepParameter parameter) noexcept;

struct SweepRow {
  double value = 0.0;
  std::vector<double> exact_variance;  // one per scheme, aggregate_variance
  std::vector<double> exact_mean;      // one per scheme, aggregate_mean
  std::vector<SchemeSummary> mc;       // empty when config.replications == 0
};

/// Evaluates `pop_template` at each grid value. Propensity sets p of every
/// stratum; MeanShift adds the value to mu1 and mu0 of every stratum.
/// Throws std::invalid_argument naming the first invalid grid index.
std::vector<SweepRow> sweep(const PopulationSpec& pop_template, SweepParameter parameter,
                            std::span<const double> grid, std::span<const WeightingScheme> schemes,
                            const SimConfig& config);

/// K interior points i/(K+1), i = 1..K.
std::vector<double> propensity_grid(std::size_t points);

}  // namespace ipwvar
