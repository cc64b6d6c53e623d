#include "ipwvar/moments.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

namespace ipwvar {

namespace {

constexpr long kBruteForceMaxTrials = 1'000'000;
constexpr double kEnumerationMaxStates = 2e7;

void check_closed_form_domain(long n, double p, const char* what) {
  if (n < 0) throw std::domain_error(std::string(what) + ": trial count must be >= 0");
  if (!(p > 0.0 && p < 1.0))
    throw std::domain_error(std::string(what) + ": probability must lie in (0, 1)");
}

// Neumaier-compensated running sum.
struct CompensatedSum {
  double sum = 0.0;
  double carry = 0.0;
  void add(double x) noexcept {
    const double t = sum + x;
    if (std::abs(sum) >= std::abs(x))
      carry += (sum - t) + x;
    else
      carry += (x - t) + sum;
    sum = t;
  }
  double value() const noexcept { return sum + carry; }
};

// E[1/(k + C)] for C ~ Bin(m, p).
double neg_moment(long k, long m, double p) {
  if (k == 1) return neg_moment_c1(m, p);
  if (k == 2) return neg_moment_c2(m, p);
  return neg_moment_bruteforce(k, m, p);
}

bool homogeneous(std::span<const StratumSpec> members) {
  const auto& f = members.front();
  return std::all_of(members.begin(), members.end(), [&](const StratumSpec& s) {
    return s.mu1 == f.mu1 && s.mu0 == f.mu0 && s.var1 == f.var1 && s.var0 == f.var0;
  });
}

// Law of total variance over the joint distribution of the members' free
// treated counts. Conditional on the counts, the pooled contrast has mean
// sum(n1_j mu1_j)/N1 - sum(n0_j mu0_j)/N0 and variance
// sum(n1_j var1_j)/N1^2 + sum(n0_j var0_j)/N0^2.
GroupMoments enumerate_group(std::span<const StratumSpec> members) {
  double states = 1.0;
  for (const auto& s : members) states *= static_cast<double>(s.n_free() + 1);
  if (states > kEnumerationMaxStates)
    throw std::length_error("hybrid variance enumeration needs " + std::to_string(states) +
                            " states; limit is " + std::to_string(kEnumerationMaxStates));

  const double p = members.front().p;
  std::vector<std::vector<double>> pmfs;
  long total = 0;
  for (const auto& s : members) {
    pmfs.push_back(binomial_pmf(s.n_free(), p));
    total += s.n_total;
  }

  struct Partial {
    double prob, n1, s_mu1, s_var1, s_mu0, s_var0;
  };
  auto visit = [&](auto&& leaf) {
    std::function<void(std::size_t, Partial)> rec = [&](std::size_t j, Partial acc) {
      if (j == members.size()) {
        const double n1 = acc.n1;
        const double n0 = static_cast<double>(total) - n1;
        const double mean = acc.s_mu1 / n1 - acc.s_mu0 / n0;
        const double var = acc.s_var1 / (n1 * n1) + acc.s_var0 / (n0 * n0);
        leaf(acc.prob, mean, var);
        return;
      }
      const auto& s = members[j];
      for (long a = 0; a <= s.n_free(); ++a) {
        const double pr = pmfs[j][static_cast<std::size_t>(a)];
        if (pr == 0.0) continue;
        const double t = static_cast<double>(1 + a);
        const double c = static_cast<double>(s.n_total - 1 - a);
        rec(j + 1, {acc.prob * pr, acc.n1 + t, acc.s_mu1 + t * s.mu1, acc.s_var1 + t * s.var1,
                    acc.s_mu0 + c * s.mu0, acc.s_var0 + c * s.var0});
      }
    };
    rec(0, {1.0, 0.0, 0.0, 0.0, 0.0, 0.0});
  };

  CompensatedSum e_mean, e_var;
  visit([&](double pr, double mean, double var) {
    e_mean.add(pr * mean);
    e_var.add(pr * var);
  });
  const double mean = e_mean.value();
  CompensatedSum spread;
  visit([&](double pr, double m, double) { spread.add(pr * (m - mean) * (m - mean)); });
  return {mean, e_var.value() + spread.value()};
}

}  // namespace

double one_minus_pow_q(double p, long k) {
  if (k == 0) return 0.0;
  return -std::expm1(static_cast<double>(k) * std::log1p(-p));
}

double neg_moment_c1(long n, double p) {
  check_closed_form_domain(n, p, "neg_moment_c1");
  const double k = static_cast<double>(n + 1);
  return one_minus_pow_q(p, n + 1) / (k * p);
}

double neg_moment_c2(long m, double p) {
  check_closed_form_domain(m, p, "neg_moment_c2");
  const double m1 = static_cast<double>(m + 1);
  const double m2 = static_cast<double>(m + 2);
  if (m2 * p >= 0.5) return 1.0 / (m1 * p) - one_minus_pow_q(p, m + 2) / (m1 * m2 * p * p);
  // Same expression over a common denominator; the numerator
  // q^(m+2) - 1 + (m+2) p = sum_{j>=2} C(m+2, j) (-p)^j is summed directly
  // because the two closed-form terms cancel when (m+2) p is small.
  double term = m2 * m1 / 2.0 * p * p;
  CompensatedSum numerator;
  for (long j = 2; j <= m + 2 && term != 0.0; ++j) {
    numerator.add(term);
    if (std::abs(term) < 1e-18 * std::abs(numerator.value())) break;
    term *= -p * static_cast<double>(m + 2 - j) / static_cast<double>(j + 1);
  }
  return numerator.value() / (m1 * m2 * p * p);
}

std::vector<double> binomial_pmf(long n, double p) {
  if (n < 0) throw std::domain_error("binomial_pmf: trial count must be >= 0");
  if (!(p >= 0.0 && p <= 1.0)) throw std::domain_error("binomial_pmf: probability outside [0, 1]");
  std::vector<double> w(static_cast<std::size_t>(n) + 1, 0.0);
  if (p == 0.0) {
    w.front() = 1.0;
    return w;
  }
  if (p == 1.0) {
    w.back() = 1.0;
    return w;
  }
  // Unnormalized weights by ratio recurrence outward from the mode; the
  // normalization below removes any error in the mode's absolute value.
  const double q = 1.0 - p;
  const long mode = std::min(n, static_cast<long>(std::floor(static_cast<double>(n + 1) * p)));
  const double odds = p / q;
  w[static_cast<std::size_t>(mode)] = 1.0;
  for (long a = mode; a < n; ++a)
    w[static_cast<std::size_t>(a + 1)] =
        w[static_cast<std::size_t>(a)] * (static_cast<double>(n - a) / static_cast<double>(a + 1)) * odds;
  for (long a = mode; a > 0; --a)
    w[static_cast<std::size_t>(a - 1)] =
        w[static_cast<std::size_t>(a)] * (static_cast<double>(a) / static_cast<double>(n - a + 1)) / odds;
  CompensatedSum total;
  for (double x : w) total.add(x);
  const double z = total.value();
  for (double& x : w) x /= z;
  return w;
}

double neg_moment_bruteforce(long c, long n, double p) {
  if (c < 1) throw std::domain_error("neg_moment_bruteforce: offset must be >= 1");
  if (n < 0) throw std::domain_error("neg_moment_bruteforce: trial count must be >= 0");
  if (n > kBruteForceMaxTrials)
    throw std::domain_error("neg_moment_bruteforce: trial count exceeds the 10^6 guard");
  const auto pmf = binomial_pmf(n, p);
  CompensatedSum acc;
  for (long a = 0; a <= n; ++a)
    acc.add(pmf[static_cast<std::size_t>(a)] / static_cast<double>(c + a));
  return acc.value();
}

StratumVariances stratum_variances(const StratumSpec& s) {
  const double p = s.p;
  const double q = 1.0 - p;
  const long n = s.n_free();
  check_closed_form_domain(n, p, "stratum_variances");
  const double nd = static_cast<double>(n);
  const double big_n = nd + 2.0;

  StratumVariances out;
  const double shift = s.mu1 / p + s.mu0 / q;
  out.v_true = shift * shift * nd * p * q / (big_n * big_n) +
               s.var1 * (p * nd + 1.0) / (big_n * big_n * p * p) +
               s.var0 * (q * nd + 1.0) / (big_n * big_n * q * q);
  out.v_est = s.var1 * neg_moment_c1(n, p) + s.var0 * neg_moment_c1(n, q);
  out.mean_true = s.mu1 * (p * nd + 1.0) / (big_n * p) - s.mu0 * (q * nd + 1.0) / (big_n * q);
  out.mean_est = s.mu1 - s.mu0;
  return out;
}

VarianceDifference variance_difference(const PopulationSpec& pop) {
  require_valid(pop);
  VarianceDifference out;
  CompensatedSum total;
  for (const auto& s : pop.strata) {
    const double p = s.p;
    const double n = static_cast<double>(s.n_free());
    const double np2 = (n + 2.0) * (n + 2.0);
    DifferenceTerms t;
    t.label = s.label;
    const double a = s.mu1 / p + s.mu0 / (1.0 - p);
    t.quadratic = a * a * n * p * (1.0 - p) / np2;
    t.treated = s.var1 * ((p * n + 1.0) / (np2 * p * p) -
                          one_minus_pow_q(p, s.n_free() + 1) / ((n + 1.0) * p));
    t.control = s.var0 * (((1.0 - p) * n + 1.0) / (np2 * (1.0 - p) * (1.0 - p)) -
                          one_minus_pow_q(1.0 - p, s.n_free() + 1) / ((n + 1.0) * (1.0 - p)));
    total.add(t.total());
    out.per_stratum.push_back(std::move(t));
  }
  out.total = total.value();
  return out;
}

GroupMoments hybrid_group_moments(std::span<const StratumSpec> members) {
  if (members.empty()) throw std::invalid_argument("hybrid_group_moments: empty group");
  const double p = members.front().p;
  for (const auto& s : members)
    if (s.p != p)
      throw std::invalid_argument("hybrid_group_moments: members must share one propensity");
  if (members.size() == 1) {
    const auto v = stratum_variances(members.front());
    return {v.mean_est, v.v_est};
  }
  if (!homogeneous(members)) return enumerate_group(members);

  const auto& f = members.front();
  const long k = static_cast<long>(members.size());
  long free = 0;
  for (const auto& s : members) free += s.n_free();
  return {f.mu1 - f.mu0, f.var1 * neg_moment(k, free, p) + f.var0 * neg_moment(k, free, 1.0 - p)};
}

namespace {

template <class PerGroup>
double aggregate(const PopulationSpec& pop, WeightingScheme scheme, bool squared, PerGroup get) {
  require_valid(pop);
  const double big_n = static_cast<double>(pop.total_size());
  CompensatedSum acc;
  auto add = [&](long n_total, double value) {
    const double w = static_cast<double>(n_total) / big_n;
    acc.add((squared ? w * w : w) * value);
  };
  if (scheme == WeightingScheme::HybridCollapsed) {
    const auto collapsed = collapse_by_propensity(pop);
    for (std::size_t g = 0; g < collapsed.grouping.groups.size(); ++g) {
      std::vector<StratumSpec> members;
      for (auto i : collapsed.grouping.groups[g].member_indices) members.push_back(pop.strata[i]);
      add(collapsed.population.strata[g].n_total, get(hybrid_group_moments(members)));
    }
    return acc.value();
  }
  for (const auto& s : pop.strata) {
    const auto v = stratum_variances(s);
    const bool use_true = scheme == WeightingScheme::TruePropensity;
    add(s.n_total, get(use_true ? GroupMoments{v.mean_true, v.v_true}
                                : GroupMoments{v.mean_est, v.v_est}));
  }
  return acc.value();
}

}  // namespace

double aggregate_variance(const PopulationSpec& pop, WeightingScheme scheme) {
  return aggregate(pop, scheme, true, [](const GroupMoments& m) { return m.variance; });
}

double aggregate_mean(const PopulationSpec& pop, WeightingScheme scheme) {
  return aggregate(pop, scheme, false, [](const GroupMoments& m) { return m.mean; });
}

double collapsed_pair_gap(long n, double p) {
  if (n < 1) throw std::domain_error("collapsed_pair_gap: n must be >= 1");
  check_closed_form_domain(n, p, "collapsed_pair_gap");
  return 0.5 * neg_moment_c1(n, p) - neg_moment_c2(2 * n, p);
}

AppendixChain appendix_polynomial_chain(long n, double p) {
  const double q = 1.0 - p;
  const double nd = static_cast<double>(n);
  const double qn = std::pow(q, nd);
  AppendixChain out;
  out.g1 = (1.0 - q * qn) * (qn + 1.0) - (2.0 * nd + 2.0) * (1.0 - q) * qn;
  out.g2 = -(nd * (q - 1.0) - q * (qn - 1.0));
  out.g3 = (nd + 1.0) * (1.0 - std::pow(1.0 - p, nd));
  return out;
}

}  // namespace ipwvar
