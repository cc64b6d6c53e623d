#include "ipwvar/simulate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "ipwvar/estimators.hpp"
#include "ipwvar/moments.hpp"
#include "ipwvar/running_moments.hpp"

namespace ipwvar {

std::string_view to_string(OutcomeModel model) noexcept {
  return model == OutcomeModel::Gaussian ? "gaussian" : "two-point";
}

OutcomeModel parse_outcome_model(std::string_view name) {
  if (name == "gaussian") return OutcomeModel::Gaussian;
  if (name == "two-point") return OutcomeModel::TwoPoint;
  throw std::invalid_argument("unknown outcome model '" + std::string(name) +
                              "' (expected gaussian or two-point)");
}

std::string_view to_string(SweepParameter parameter) noexcept {
  return parameter == SweepParameter::Propensity ? "p" : "mu_shift";
}

std::uint64_t chunk_seed(std::uint64_t master_seed, std::uint64_t chunk_index) noexcept {
  // splitmix64 applied to the (seed, counter) pair.
  std::uint64_t z = master_seed + 0x9e3779b97f4a7c15ULL * (chunk_index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Assignment draw_assignment(const StratumSpec& s, Rng& rng) {
  std::binomial_distribution<long> free_treated(s.n_free(), s.p);
  const long n1 = 1 + free_treated(rng);
  return {n1, s.n_total - n1};
}

namespace {

double draw_sum(long n, double mu, double var, OutcomeModel model, Rng& rng) {
  const double nd = static_cast<double>(n);
  if (model == OutcomeModel::Gaussian) {
    std::normal_distribution<double> z;
    return nd * mu + std::sqrt(nd * var) * z(rng);
  }
  std::binomial_distribution<long> ups(n, 0.5);
  return nd * mu + std::sqrt(var) * static_cast<double>(2 * ups(rng) - n);
}

const SimConfig& check_config(const SimConfig& config) {
  if (config.replications < 1) throw std::invalid_argument("replications must be >= 1");
  if (config.chunk_size < 1) throw std::invalid_argument("chunk_size must be >= 1");
  return config;
}

// Everything a replication needs, resolved once.
struct Plan {
  std::vector<StratumSpec> strata;
  std::vector<double> weights;                    // N_x / N
  std::vector<std::vector<std::size_t>> groups;   // hybrid merge groups
  std::vector<double> group_weights;              // N_g / N
  std::vector<WeightingScheme> schemes;

  Plan(const PopulationSpec& pop, std::span<const WeightingScheme> s)
      : strata(pop.strata), schemes(s.begin(), s.end()) {
    const double big_n = static_cast<double>(pop.total_size());
    for (const auto& x : strata) weights.push_back(static_cast<double>(x.n_total) / big_n);
    const auto collapsed = collapse_by_propensity(pop);
    for (std::size_t g = 0; g < collapsed.grouping.groups.size(); ++g) {
      groups.push_back(collapsed.grouping.groups[g].member_indices);
      group_weights.push_back(static_cast<double>(collapsed.population.strata[g].n_total) / big_n);
    }
  }
};

struct Scratch {
  std::vector<long> n1, n0;
  std::vector<double> sum1, sum0;
  explicit Scratch(std::size_t k) : n1(k), n0(k), sum1(k), sum0(k) {}
};

double estimate(const Plan& plan, const Scratch& d, WeightingScheme scheme) {
  double tau = 0.0;
  switch (scheme) {
    case WeightingScheme::TruePropensity:
      for (std::size_t i = 0; i < plan.strata.size(); ++i)
        tau += plan.weights[i] * weighted_contrast(d.n1[i], d.n0[i], d.sum1[i], d.sum0[i],
                                                   plan.strata[i].p);
      break;
    case WeightingScheme::EstimatedPropensity:
      for (std::size_t i = 0; i < plan.strata.size(); ++i)
        tau += plan.weights[i] * difference_in_means(d.n1[i], d.n0[i], d.sum1[i], d.sum0[i]);
      break;
    case WeightingScheme::HybridCollapsed:
      for (std::size_t g = 0; g < plan.groups.size(); ++g) {
        long n1 = 0, n0 = 0;
        double s1 = 0.0, s0 = 0.0;
        for (auto i : plan.groups[g]) {
          n1 += d.n1[i];
          n0 += d.n0[i];
          s1 += d.sum1[i];
          s0 += d.sum0[i];
        }
        tau += plan.group_weights[g] * difference_in_means(n1, n0, s1, s0);
      }
      break;
  }
  return tau;
}

std::vector<RunningMoments> run_chunk(const Plan& plan, const SimConfig& config,
                                      std::uint64_t chunk) {
  std::vector<RunningMoments> acc(plan.schemes.size());
  Rng rng(chunk_seed(config.master_seed, chunk));
  Scratch d(plan.strata.size());
  const std::uint64_t begin = chunk * config.chunk_size;
  const std::uint64_t end = std::min(config.replications, begin + config.chunk_size);
  for (std::uint64_t r = begin; r < end; ++r) {
    for (std::size_t i = 0; i < plan.strata.size(); ++i) {
      const auto a = draw_assignment(plan.strata[i], rng);
      const auto [s1, s0] = draw_outcomes(plan.strata[i], a.n1, a.n0, config.outcome_model, rng);
      d.n1[i] = a.n1;
      d.n0[i] = a.n0;
      d.sum1[i] = s1;
      d.sum0[i] = s0;
    }
    for (std::size_t k = 0; k < plan.schemes.size(); ++k)
      acc[k].push(estimate(plan, d, plan.schemes[k]));
  }
  return acc;
}

}  // namespace

std::pair<double, double> draw_outcomes(const StratumSpec& s, long n1, long n0, OutcomeModel model,
                                        Rng& rng) {
  const double sum1 = draw_sum(n1, s.mu1, s.var1, model, rng);
  const double sum0 = draw_sum(n0, s.mu0, s.var0, model, rng);
  return {sum1, sum0};
}

const SchemeSummary& MonteCarloReport::at(WeightingScheme scheme) const {
  for (const auto& s : schemes)
    if (s.scheme == scheme) return s;
  throw std::out_of_range("report has no entry for scheme '" + std::string(to_string(scheme)) + "'");
}

MonteCarloReport run_monte_carlo(const PopulationSpec& pop, std::span<const WeightingScheme> schemes,
                                 const SimConfig& config) {
  require_valid(pop);
  check_config(config);
  if (schemes.empty()) throw std::invalid_argument("at least one weighting scheme is required");

  const Plan plan(pop, schemes);
  const std::uint64_t chunks = (config.replications + config.chunk_size - 1) / config.chunk_size;
  std::vector<std::vector<RunningMoments>> partial(chunks);

  unsigned threads = config.threads == 0 ? std::max(1u, std::thread::hardware_concurrency())
                                         : config.threads;
  threads = static_cast<unsigned>(std::min<std::uint64_t>(threads, chunks));
  if (threads <= 1) {
    for (std::uint64_t c = 0; c < chunks; ++c) partial[c] = run_chunk(plan, config, c);
  } else {
    std::atomic<std::uint64_t> next{0};
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t)
      pool.emplace_back([&] {
        for (std::uint64_t c = next++; c < chunks; c = next++) partial[c] = run_chunk(plan, config, c);
      });
  }

  std::vector<RunningMoments> total(schemes.size());
  for (const auto& chunk : partial)
    for (std::size_t k = 0; k < total.size(); ++k) total[k].merge(chunk[k]);

  MonteCarloReport report;
  report.replications = config.replications;
  report.master_seed = config.master_seed;
  report.chunk_size = config.chunk_size;
  report.outcome_model = config.outcome_model;
  for (std::size_t k = 0; k < total.size(); ++k)
    report.schemes.push_back({schemes[k], total[k].mean(), total[k].mean_standard_error(),
                              total[k].variance(), total[k].variance_standard_error()});
  return report;
}

std::vector<double> propensity_grid(std::size_t points) {
  std::vector<double> grid;
  grid.reserve(points);
  for (std::size_t i = 1; i <= points; ++i)
    grid.push_back(static_cast<double>(i) / static_cast<double>(points + 1));
  return grid;
}

std::vector<SweepRow> sweep(const PopulationSpec& pop_template, SweepParameter parameter,
                            std::span<const double> grid, std::span<const WeightingScheme> schemes,
                            const SimConfig& config) {
  std::vector<SweepRow> rows;
  rows.reserve(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double value = grid[i];
    PopulationSpec pop = pop_template;
    for (auto& s : pop.strata) {
      if (parameter == SweepParameter::Propensity) {
        s.p = value;
      } else {
        s.mu1 += value;
        s.mu0 += value;
      }
    }
    if (auto v = validate(pop); !v.empty())
      throw std::invalid_argument("grid point " + std::to_string(i) + " (" + std::to_string(value) +
                                  ") is invalid: " + v.front().kind + ": " + v.front().message);

    SweepRow row;
    row.value = value;
    for (auto scheme : schemes) {
      row.exact_variance.push_back(aggregate_variance(pop, scheme));
      row.exact_mean.push_back(aggregate_mean(pop, scheme));
    }
    if (config.replications > 0) row.mc = run_monte_carlo(pop, schemes, config).schemes;
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace ipwvar
