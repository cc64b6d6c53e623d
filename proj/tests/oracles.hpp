#pragma once

// Test-only reference computations. These deliberately avoid the library's
// closed forms and pmf helper: probabilities are built in long double from
// q^n upward, and moments come from explicit enumeration.

#include <algorithm>
#include <cmath>
#include <string>
#include <random>
#include <vector>

#include "ipwvar/strata.hpp"

namespace oracle {

inline std::vector<long double> pmf(long n, long double p) {
  std::vector<long double> out(static_cast<std::size_t>(n) + 1);
  const long double q = 1.0L - p;
  out[0] = std::pow(q, static_cast<long double>(n));
  for (long a = 0; a < n; ++a)
    out[static_cast<std::size_t>(a + 1)] =
        out[static_cast<std::size_t>(a)] * static_cast<long double>(n - a) /
        static_cast<long double>(a + 1) * p / q;
  return out;
}

/// E[1/(c + A)], A ~ Bin(n, p).
inline double neg_moment(long c, long n, double p) {
  const auto w = pmf(n, p);
  long double acc = 0.0L;
  for (long a = 0; a <= n; ++a) acc += w[static_cast<std::size_t>(a)] / static_cast<long double>(c + a);
  return static_cast<double>(acc);
}

/// E[1/(2(1+A))] - E[1/(2+A+B)] by double enumeration over independent A, B.
inline double pair_gap(long n, double p) {
  const auto w = pmf(n, p);
  long double acc = 0.0L;
  for (long a = 0; a <= n; ++a)
    for (long b = 0; b <= n; ++b) {
      const long double pr = w[static_cast<std::size_t>(a)] * w[static_cast<std::size_t>(b)];
      acc += pr * (1.0L / (2.0L * (1 + a)) - 1.0L / static_cast<long double>(2 + a + b));
    }
  return static_cast<double>(acc);
}

struct Moments {
  double mean_true, v_true, mean_est, v_est;
};

/// Law of total variance by enumerating N1 = 1 + A for one stratum.
inline Moments stratum(const ipwvar::StratumSpec& s) {
  const long n = s.n_total - 2;
  const long double p = s.p, q = 1.0L - s.p, big_n = s.n_total;
  const auto w = pmf(n, p);
  long double mt = 0, mt2 = 0, ct = 0, me = 0, me2 = 0, ce = 0;
  for (long a = 0; a <= n; ++a) {
    const long double pr = w[static_cast<std::size_t>(a)];
    const long double n1 = 1 + a, n0 = big_n - n1;
    // true-PS: (n1/(N p)) Ybar1 - (n0/(N q)) Ybar0
    const long double at = n1 / (big_n * p), bt = n0 / (big_n * q);
    const long double m_t = at * s.mu1 - bt * s.mu0;
    const long double v_t = at * at * s.var1 / n1 + bt * bt * s.var0 / n0;
    mt += pr * m_t;
    mt2 += pr * m_t * m_t;
    ct += pr * v_t;
    const long double m_e = s.mu1 - s.mu0;
    const long double v_e = s.var1 / n1 + s.var0 / n0;
    me += pr * m_e;
    me2 += pr * m_e * m_e;
    ce += pr * v_e;
  }
  return {static_cast<double>(mt), static_cast<double>(ct + mt2 - mt * mt), static_cast<double>(me),
          static_cast<double>(ce + me2 - me * me)};
}

/// Pooled difference-in-means moments of cells sharing one propensity, by
/// enumerating every member's treated count.
inline std::pair<double, double> pooled_group(const std::vector<ipwvar::StratumSpec>& cells) {
  std::vector<std::vector<long double>> w;
  long total = 0;
  for (const auto& c : cells) {
    w.push_back(pmf(c.n_total - 2, c.p));
    total += c.n_total;
  }
  long double e_m = 0, e_m2 = 0, e_v = 0;
  std::vector<long> a(cells.size(), 0);
  while (true) {
    long double pr = 1, n1 = 0, s_mu1 = 0, s_v1 = 0, s_mu0 = 0, s_v0 = 0;
    for (std::size_t j = 0; j < cells.size(); ++j) {
      pr *= w[j][static_cast<std::size_t>(a[j])];
      const long double t = 1 + a[j], c = cells[j].n_total - 1 - a[j];
      n1 += t;
      s_mu1 += t * cells[j].mu1;
      s_v1 += t * cells[j].var1;
      s_mu0 += c * cells[j].mu0;
      s_v0 += c * cells[j].var0;
    }
    const long double n0 = total - n1;
    const long double m = s_mu1 / n1 - s_mu0 / n0;
    e_m += pr * m;
    e_m2 += pr * m * m;
    e_v += pr * (s_v1 / (n1 * n1) + s_v0 / (n0 * n0));
    std::size_t j = 0;
    while (j < cells.size() && ++a[j] > cells[j].n_total - 2) a[j++] = 0;
    if (j == cells.size()) break;
  }
  return {static_cast<double>(e_m), static_cast<double>(e_v + e_m2 - e_m * e_m)};
}

/// A random valid stratum.
inline ipwvar::StratumSpec random_stratum(std::mt19937_64& rng, const std::string& label) {
  std::uniform_real_distribution<double> p(0.05, 0.95), mu(-5.0, 5.0), var(0.0, 10.0);
  std::uniform_int_distribution<long> n(2, 40);
  return {label, p(rng), mu(rng), mu(rng), var(rng), var(rng), n(rng)};
}

inline bool close(double a, double b, double rel, double abs_floor = 0.0) {
  return std::abs(a - b) <= rel * std::max({1.0, std::abs(a), std::abs(b)}) + abs_floor;
}

}  // namespace oracle
