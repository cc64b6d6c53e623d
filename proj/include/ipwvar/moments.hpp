#pragma once

#include <span>
#include <string>
#include <vector>

#include "ipwvar/strata.hpp"

namespace ipwvar {

// Negative moments of A ~ Bin(n, p), i.e. E[1 / (c + A)].
//
// The closed forms throw std::domain_error for n < 0 or p outside (0, 1).

/// E[1/(1+A)] = (1 - q^(n+1)) / ((n+1) p).
double neg_moment_c1(long n, double p);

/// E[1/(2+C)] for C ~ Bin(m, p):
/// 1/((m+1) p) - (1 - q^(m+2)) / ((m+1)(m+2) p^2).
double neg_moment_c2(long m, double p);

/// Direct summation of C(n,a) p^a q^(n-a) / (c+a) over a = 0..n.
/// Accepts any c >= 1 and p in [0, 1]; throws std::domain_error when n exceeds 10^6.
double neg_moment_bruteforce(long c, long n, double p);

/// Bin(n, p) probabilities for a = 0..n, normalized to sum to one.
std::vector<double> binomial_pmf(long n, double p);

/// 1 - (1-p)^k, accurate for small p.
double one_minus_pow_q(double p, long k);

struct StratumVariances {
  double v_true = 0.0;
  double v_est = 0.0;
  double mean_true = 0.0;
  double mean_est = 0.0;
};

/// Exact finite-sample mean and variance of the true-PS and estimated-PS
/// stratum contrasts under the forced-pair design (N1 = 1 + Bin(N-2, p)).
StratumVariances stratum_variances(const StratumSpec& s);

/// The three per-stratum pieces of the true-minus-estimated variance gap.
struct DifferenceTerms {
  std::string label;
  double quadratic = 0.0;  // (mu1/p + mu0/q)^2 n p q / (n+2)^2
  double treated = 0.0;    // var1 * (...)
  double control = 0.0;    // var0 * (...)
  double total() const noexcept { return quadratic + treated + control; }
};

struct VarianceDifference {
  double total = 0.0;
  std::vector<DifferenceTerms> per_stratum;
};

/// Unweighted sum over strata of V(true-PS contrast) - V(estimated-PS contrast),
/// evaluated from the three-sum expression directly.
VarianceDifference variance_difference(const PopulationSpec& pop);

/// Exact mean and variance of the estimated-PS contrast of a merged cell whose
/// members share one propensity and each carry a forced treated-control pair.
struct GroupMoments {
  double mean = 0.0;
  double variance = 0.0;
};
GroupMoments hybrid_group_moments(std::span<const StratumSpec> members);

/// Variance of the full estimator sum_x (N_x/N) tau_x under `scheme`.
double aggregate_variance(const PopulationSpec& pop, WeightingScheme scheme);

/// Mean of the full estimator under `scheme`.
double aggregate_mean(const PopulationSpec& pop, WeightingScheme scheme);

/// E[1/(2(1+A))] - E[1/(2+A+B)] for independent A, B ~ Bin(n, p); n >= 1.
double collapsed_pair_gap(long n, double p);

struct AppendixChain {
  double g1 = 0.0;
  double g2 = 0.0;
  double g3 = 0.0;
};

/// The successive polynomials used to prove collapsed_pair_gap >= 0:
///   g1 = (1 - q^(n+1))(q^n + 1) - (2n+2)(1-q) q^n
///   g2 = -[n(q-1) - q(q^n - 1)]
///   g3 = (n+1)(1 - (1-p)^n)
/// with q = 1 - p. Defined for n >= 1 and p in [0, 1].
AppendixChain appendix_polynomial_chain(long n, double p);

}  // namespace ipwvar
