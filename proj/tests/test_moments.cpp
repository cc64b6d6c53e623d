#include <doctest.h>

#include <random>

#include "ipwvar/moments.hpp"
#include "oracles.hpp"

using namespace ipwvar;

namespace {

const StratumSpec kFigureLeft{"x", 0.5, 0.0, 0.0, 4.0, 16.0, 17};
const StratumSpec kFigureRight{"x", 0.5, 1.0, 3.0, 4.0, 16.0, 17};

StratumSpec at_p(StratumSpec s, double p) {
  s.p = p;
  return s;
}

}  // namespace

TEST_CASE("neg_moment_c1 small cases") {
  CHECK(neg_moment_c1(0, 0.5) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(neg_moment_c1(1, 0.5) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(neg_moment_c1(15, 0.3) == doctest::Approx(oracle::neg_moment(1, 15, 0.3)).epsilon(1e-13));
}

TEST_CASE("neg_moment_c2 small cases") {
  CHECK(neg_moment_c2(0, 0.5) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(neg_moment_c2(1, 0.5) == doctest::Approx(0.5 / 2 + 0.5 / 3).epsilon(1e-15));
  CHECK(neg_moment_c2(30, 0.3) == doctest::Approx(oracle::neg_moment(2, 30, 0.3)).epsilon(1e-13));
}

TEST_CASE("neg_moment_bruteforce small cases") {
  CHECK(neg_moment_bruteforce(1, 0, 0.37) == 1.0);
  CHECK(neg_moment_bruteforce(1, 1, 0.5) == doctest::Approx(0.75).epsilon(1e-15));
  const double p = 0.25, q = 0.75;
  const double direct = q * q * q * q / 2 + 4 * p * q * q * q / 3 + 6 * p * p * q * q / 4 +
                        4 * p * p * p * q / 5 + p * p * p * p / 6;
  CHECK(neg_moment_bruteforce(2, 4, 0.25) == doctest::Approx(direct).epsilon(1e-15));
}

TEST_CASE("negative-moment domain errors") {
  CHECK_THROWS_AS(neg_moment_c1(-1, 0.5), std::domain_error);
  CHECK_THROWS_AS(neg_moment_c1(3, 0.0), std::domain_error);
  CHECK_THROWS_AS(neg_moment_c1(3, 1.0), std::domain_error);
  CHECK_THROWS_AS(neg_moment_c2(3, 1.5), std::domain_error);
  CHECK_THROWS_AS(neg_moment_bruteforce(0, 3, 0.5), std::domain_error);
  CHECK_THROWS_AS(neg_moment_bruteforce(1, 1'000'001, 0.5), std::domain_error);
  CHECK_NOTHROW(neg_moment_bruteforce(1, 1'000'000, 0.5));
}

TEST_CASE("closed forms match independent enumeration on the full grid") {
  double worst = 0.0;
  for (long n = 0; n <= 200; ++n)
    for (int i = 1; i <= 99; ++i) {
      const double p = i / 100.0;
      const double e1 = oracle::neg_moment(1, n, p);
      const double e2 = oracle::neg_moment(2, n, p);
      const double d1 = std::abs(neg_moment_c1(n, p) - e1) / std::max(1.0, e1);
      const double d2 = std::abs(neg_moment_c2(n, p) - e2) / std::max(1.0, e2);
      const double b1 = std::abs(neg_moment_bruteforce(1, n, p) - e1) / std::max(1.0, e1);
      const double b2 = std::abs(neg_moment_bruteforce(2, n, p) - e2) / std::max(1.0, e2);
      worst = std::max({worst, d1, d2, b1, b2});
    }
  CHECK(worst <= 1e-12);
}

TEST_CASE("closed forms stay in range") {
  for (long n : {0L, 1L, 5L, 50L, 500L})
    for (double p : {0.001, 0.1, 0.5, 0.9, 0.999}) {
      const double c1 = neg_moment_c1(n, p);
      const double c2 = neg_moment_c2(n, p);
      CHECK(c1 > 0.0);
      CHECK(c1 <= 1.0);
      CHECK(c2 > 0.0);
      CHECK(c2 <= 0.5 + 1e-12);
    }
}

TEST_CASE("binomial_pmf sums to one and matches the oracle") {
  for (long n : {0L, 1L, 17L, 200L})
    for (double p : {0.01, 0.3, 0.99}) {
      const auto w = binomial_pmf(n, p);
      const auto o = oracle::pmf(n, p);
      double total = 0.0;
      for (std::size_t a = 0; a < w.size(); ++a) {
        total += w[a];
        CHECK(w[a] == doctest::Approx(static_cast<double>(o[a])).epsilon(1e-12));
      }
      CHECK(total == doctest::Approx(1.0).epsilon(1e-14));
    }
  CHECK(binomial_pmf(3, 0.0) == std::vector<double>{1, 0, 0, 0});
  CHECK(binomial_pmf(3, 1.0) == std::vector<double>{0, 0, 0, 1});
}

TEST_CASE("stratum_variances: degenerate outcomes give zero") {
  const auto v = stratum_variances({"x", 0.5, 0.0, 0.0, 0.0, 0.0, 17});
  CHECK(v.v_true == 0.0);
  CHECK(v.v_est == 0.0);
}

TEST_CASE("stratum_variances matches enumeration of the forced-pair design") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 300; ++trial) {
    const auto s = oracle::random_stratum(rng, "x");
    const auto v = stratum_variances(s);
    const auto o = oracle::stratum(s);
    CHECK(oracle::close(v.v_true, o.v_true, 1e-12));
    CHECK(oracle::close(v.v_est, o.v_est, 1e-12));
    CHECK(oracle::close(v.mean_true, o.mean_true, 1e-12));
    CHECK(v.mean_est == s.mu1 - s.mu0);
    CHECK(v.v_true >= 0.0);
    CHECK(v.v_est >= 0.0);
  }
}

TEST_CASE("stratum_variances: shifted means make the true-PS estimator worse") {
  const auto v = stratum_variances(kFigureRight);
  CHECK(v.v_true - v.v_est > 0.0);
}

TEST_CASE("v_est ignores the means; v_true grows with a common shift") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    auto s = oracle::random_stratum(rng, "x");
    s.n_total = std::max<long>(s.n_total, 3);  // n = 0 has no assignment noise
    const auto base = stratum_variances(s);
    double previous = base.v_true;
    for (double shift : {10.0, 100.0, 1000.0}) {
      auto moved = s;
      moved.mu1 += shift;
      moved.mu0 += shift;
      const auto v = stratum_variances(moved);
      CHECK(v.v_est == base.v_est);
      CHECK(v.v_true > previous);
      previous = v.v_true;
    }
  }
}

TEST_CASE("variance_difference agrees with per-stratum variances") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    PopulationSpec pop;
    const int k = 1 + static_cast<int>(rng() % 5);
    for (int i = 0; i < k; ++i) pop.strata.push_back(oracle::random_stratum(rng, "s" + std::to_string(i)));
    const auto d = variance_difference(pop);
    double direct = 0.0, scale = 0.0, terms = 0.0;
    for (std::size_t i = 0; i < pop.strata.size(); ++i) {
      const auto v = stratum_variances(pop.strata[i]);
      direct += v.v_true - v.v_est;
      scale = std::max({scale, v.v_true, v.v_est});
      terms += d.per_stratum[i].total();
      CHECK(d.per_stratum[i].label == pop.strata[i].label);
    }
    CHECK(std::abs(d.total - direct) <= 1e-12 * std::max(1.0, scale));
    CHECK(std::abs(d.total - terms) <= 1e-12 * std::max(1.0, scale));
  }
}

TEST_CASE("variance_difference on zero populations") {
  PopulationSpec pop{{{"a", 0.2, 0, 0, 0, 0, 5}, {"b", 0.7, 0, 0, 0, 0, 30}}};
  CHECK(variance_difference(pop).total == 0.0);
}

TEST_CASE("left panel: the sign of the difference changes across p") {
  bool negative = false, positive = false;
  for (int i = 1; i <= 49; ++i) {
    const double p = i / 50.0;
    const double d = variance_difference({{at_p(kFigureLeft, p)}}).total;
    negative = negative || d < 0.0;
    positive = positive || d > 0.0;
  }
  CHECK(negative);
  CHECK(positive);
}

TEST_CASE("right panel: the difference is positive everywhere on the grid") {
  for (int i = 1; i <= 49; ++i) CHECK(variance_difference({{at_p(kFigureRight, i / 50.0)}}).total > 0.0);
}

TEST_CASE("aggregate_variance") {
  SUBCASE("one stratum equals its own variance") {
    const auto v = stratum_variances(kFigureRight);
    PopulationSpec pop{{kFigureRight}};
    CHECK(aggregate_variance(pop, WeightingScheme::TruePropensity) == doctest::Approx(v.v_true));
    CHECK(aggregate_variance(pop, WeightingScheme::EstimatedPropensity) == doctest::Approx(v.v_est));
    CHECK(aggregate_variance(pop, WeightingScheme::HybridCollapsed) == doctest::Approx(v.v_est));
    CHECK(aggregate_mean(pop, WeightingScheme::TruePropensity) == doctest::Approx(v.mean_true));
  }
  SUBCASE("weights are (N_x/N)^2") {
    PopulationSpec pop{{{"a", 0.3, 1, 2, 3, 4, 10}, {"b", 0.6, -1, 0, 2, 1, 30}}};
    const auto a = stratum_variances(pop.strata[0]);
    const auto b = stratum_variances(pop.strata[1]);
    CHECK(aggregate_variance(pop, WeightingScheme::EstimatedPropensity) ==
          doctest::Approx(a.v_est / 16 + b.v_est * 9 / 16));
    CHECK(aggregate_variance(pop, WeightingScheme::TruePropensity) ==
          doctest::Approx(a.v_true / 16 + b.v_true * 9 / 16));
    CHECK(aggregate_variance(pop, WeightingScheme::HybridCollapsed) ==
          aggregate_variance(pop, WeightingScheme::EstimatedPropensity));
  }
  SUBCASE("two identical strata: collapsing strictly helps") {
    for (int i = 1; i <= 49; ++i) {
      const double p = i / 50.0;
      PopulationSpec pop{{at_p({"a", 0, 0, 0, 4, 16, 17}, p), at_p({"b", 0, 0, 0, 4, 16, 17}, p)}};
      CHECK(aggregate_variance(pop, WeightingScheme::HybridCollapsed) <
            aggregate_variance(pop, WeightingScheme::EstimatedPropensity));
    }
  }
}

TEST_CASE("hybrid group moments match joint enumeration") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 60; ++trial) {
    std::vector<StratumSpec> cells;
    const int k = 2 + static_cast<int>(rng() % 2);
    const double p = 0.1 + 0.8 * std::uniform_real_distribution<double>()(rng);
    for (int i = 0; i < k; ++i) {
      auto s = oracle::random_stratum(rng, "s" + std::to_string(i));
      s.p = p;
      s.n_total = std::min<long>(s.n_total, 15);
      cells.push_back(s);
    }
    const auto got = hybrid_group_moments(cells);
    const auto [mean, var] = oracle::pooled_group(cells);
    CHECK(oracle::close(got.mean, mean, 1e-12));
    CHECK(oracle::close(got.variance, var, 1e-12));
  }
  SUBCASE("homogeneous cells use the closed forms") {
    for (int k : {2, 3, 4}) {
      std::vector<StratumSpec> cells;
      for (int i = 0; i < k; ++i) cells.push_back({"s" + std::to_string(i), 0.35, 2, -1, 4, 16, 7 + i});
      const auto got = hybrid_group_moments(cells);
      const auto [mean, var] = oracle::pooled_group(cells);
      CHECK(got.mean == 3.0);
      CHECK(oracle::close(got.variance, var, 1e-12));
    }
  }
  CHECK_THROWS_AS(hybrid_group_moments({}), std::invalid_argument);
  std::vector<StratumSpec> mixed{{"a", 0.3, 0, 0, 1, 1, 5}, {"b", 0.4, 0, 0, 1, 1, 5}};
  CHECK_THROWS_AS(hybrid_group_moments(mixed), std::invalid_argument);
  std::vector<StratumSpec> huge{{"a", 0.3, 0, 0, 1, 1, 5000}, {"b", 0.3, 1, 0, 1, 1, 5000},
                                {"c", 0.3, 2, 0, 1, 1, 5000}};
  CHECK_THROWS_AS(hybrid_group_moments(huge), std::length_error);
}

TEST_CASE("collapsed_pair_gap") {
  SUBCASE("equals the difference of the two negative moments") {
    for (long n : {1L, 2L, 15L, 100L})
      for (double p : {0.01, 0.3, 0.5, 0.97}) {
        const double expected = neg_moment_c1(n, p) / 2 - neg_moment_c2(2 * n, p);
        CHECK(std::abs(collapsed_pair_gap(n, p) - expected) <= 1e-12 * std::abs(expected));
      }
  }
  SUBCASE("matches double enumeration over (A, B)") {
    CHECK(collapsed_pair_gap(15, 0.5) == doctest::Approx(oracle::pair_gap(15, 0.5)).epsilon(1e-12));
    CHECK(collapsed_pair_gap(3, 0.2) == doctest::Approx(oracle::pair_gap(3, 0.2)).epsilon(1e-12));
  }
  SUBCASE("non-negative on the audit grid") {
    for (long n = 1; n <= 200; ++n)
      for (int i = 1; i <= 199; ++i) CHECK_MESSAGE(collapsed_pair_gap(n, i / 200.0) >= -1e-15, n);
  }
  SUBCASE("vanishes toward the endpoints") {
    for (long n : {1L, 10L, 200L}) {
      const double lo = collapsed_pair_gap(n, 0.001);
      const double hi = collapsed_pair_gap(n, 0.999);
      CHECK(lo >= -1e-15);
      CHECK(hi >= -1e-15);
      CHECK(collapsed_pair_gap(n, 1e-6) < lo);
      CHECK(collapsed_pair_gap(n, 0.999999) < hi);
      CHECK(collapsed_pair_gap(n, 1e-6) < 1e-4);
      CHECK(collapsed_pair_gap(n, 0.999999) < 1e-6);
    }
    CHECK(collapsed_pair_gap(1, 1e-6) == doctest::Approx(oracle::pair_gap(1, 1e-6)).epsilon(1e-9));
  }
  CHECK_THROWS_AS(collapsed_pair_gap(0, 0.5), std::domain_error);
  CHECK_THROWS_AS(collapsed_pair_gap(3, 1.0), std::domain_error);
}

TEST_CASE("appendix polynomial chain") {
  for (long n = 1; n <= 200; ++n) {
    const auto at0 = appendix_polynomial_chain(n, 0.0);
    const auto at1 = appendix_polynomial_chain(n, 1.0);
    CHECK(at0.g1 == 0.0);
    CHECK(at1.g1 == 1.0);
    CHECK(at0.g2 == 0.0);
    CHECK(at1.g2 == static_cast<double>(n));
    double prev_g2 = at0.g2;
    for (int i = 0; i <= 1000; ++i) {
      const auto c = appendix_polynomial_chain(n, i / 1000.0);
      CHECK(c.g3 >= 0.0);
      CHECK(c.g1 >= -1e-12);
      CHECK(c.g2 - prev_g2 >= -1e-12);
      prev_g2 = c.g2;
    }
  }
}
