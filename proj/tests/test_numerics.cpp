#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace qcm;

namespace {

double naive_poisson_lt(long k, double mu) {
  double term = std::exp(-mu), sum = 0.0;
  for (long i = 0; i < k; ++i) {
    sum += term;
    term *= mu / static_cast<double>(i + 1);
  }
  return sum;
}

double oracle_gamma(long s, double z) {
  return oracle::simpson([&](double t) { return std::pow(t, s - 1) * std::exp(-t); }, z, z + 80.0,
                         1e-12 * std::tgamma(static_cast<double>(s)));
}

double oracle_F(long l, double x1, double xN1) {
  double m = l - x1 - xN1;
  auto f = [&](double y) { return std::exp(-y * (l - x1)) * [&] {
                             double t = 1.0, s = 0.0;
                             for (long k = 0; k < l; ++k) {
                               s += t;
                               t *= y * m / static_cast<double>(k + 1);
                             }
                             return s;
                           }(); };
  return oracle::simpson(f, 0.0, (l - 1.0) / m, 1e-13);
}

double oracle_final(long l, double x1) {
  auto f = [&](double y) { return naive_poisson_lt(l, y * (l - 1.0)) * std::exp(-y * (1.0 - x1)); };
  return attenuation_b(x1) * oracle::simpson(f, 0.0, 1.0, 1e-13);
}

}  // namespace

TEST(Constants, BetaThreeWays) {
  double closed = (19.0 - 67.0 * std::exp(-3.0)) / 27.0;
  double quad = oracle::simpson([](double y) { return std::exp(-y) * naive_poisson_lt(3, 2 * y); }, 0.0, 1.0, 1e-14);
  double mid = final_bound_mid(3, 0.0);
  EXPECT_NEAR(beta_two_sided(), closed, 1e-12);
  EXPECT_NEAR(closed, quad, 1e-9);
  EXPECT_NEAR(closed, mid, 1e-9);
  EXPECT_NEAR(quad, mid, 1e-9);
  EXPECT_NEAR(one_minus_inv_e(), 1.0 - 1.0 / std::exp(1.0), 1e-12);
}

TEST(Constants, BetaMatchesQuotedDecimal) { EXPECT_NEAR(beta_two_sided(), 0.5801, 5e-5); }

TEST(PoissonCdf, Examples) {
  EXPECT_EQ(poisson_cdf_lt(3, 0.0), 1.0);
  EXPECT_NEAR(poisson_cdf_lt(3, 2.0), 5 * std::exp(-2.0), 1e-15);
  EXPECT_THROW(poisson_cdf_lt(0, 1.0), InvalidInput);
  EXPECT_THROW(poisson_cdf_lt(1, -1.0), InvalidInput);
}

TEST(PoissonCdf, MonotoneAndMatchesNaiveSum) {
  for (long k : {1L, 2L, 3L, 5L, 10L, 50L, 120L}) {
    double prev = 1.0;
    for (int i = 0; i <= 400; ++i) {
      double mu = i * 0.5;
      double p = poisson_cdf_lt(k, mu);
      EXPECT_LE(p, prev + 1e-14);
      prev = p;
      if (mu < 60) {
        double want = naive_poisson_lt(k, mu);
        EXPECT_NEAR(p, want, 1e-12 * want + 1e-300) << k << " " << mu;
      }
    }
  }
  EXPECT_NEAR(poisson_tail_ge(3, 2.0) + poisson_cdf_lt(3, 2.0), 1.0, 1e-15);
  EXPECT_NEAR(poisson_tail_ge(200, 10.0), 1.0 - poisson_cdf_lt(200, 10.0), 1e-15);
  EXPECT_GT(poisson_tail_ge(200, 10.0), 0.0);
}

TEST(IncompleteGamma, Examples) {
  EXPECT_NEAR(upper_incomplete_gamma_int(3, 0.0), 2.0, 1e-13);
  for (double z : {0.0, 0.3, 1.0, 7.5}) EXPECT_NEAR(upper_incomplete_gamma_int(1, z), std::exp(-z), 1e-13 * std::exp(-z));
  EXPECT_NEAR(upper_incomplete_gamma_int(3, 2.0), 10 * std::exp(-2.0), 1e-13);
  EXPECT_THROW(upper_incomplete_gamma_int(0, 1.0), InvalidInput);
}

TEST(IncompleteGamma, MatchesQuadratureAtRandomPoints) {
  Stream rng(1, "gamma-test");
  for (int i = 0; i < 100; ++i) {
    long s = 1 + static_cast<long>(rng.index(8));
    double z = 10 * rng.uniform();
    double want = oracle_gamma(s, z);
    EXPECT_NEAR(upper_incomplete_gamma_int(s, z), want, 1e-8 * std::max(1.0, want)) << s << " " << z;
  }
}

TEST(FEll, ThreeAtOriginIsBeta) { EXPECT_NEAR(F_ell(3, 0.0, 1.0), beta_two_sided(), 1e-9); }

TEST(FEll, MatchesQuadratureAtRandomPoints) {
  Stream rng(2, "fl-test");
  for (int i = 0; i < 120; ++i) {
    long l = 3 + static_cast<long>(rng.index(117));
    double x1 = rng.uniform(), xN1 = (1.0 - x1) * rng.uniform();
    EXPECT_NEAR(F_ell(l, x1, xN1), oracle_F(l, x1, xN1), 1e-8) << l << " " << x1 << " " << xN1;
  }
  for (long l : {3L, 4L, 10L}) EXPECT_NEAR(F_ell(l, 0.2, 0.0), oracle_F(l, 0.2, 0.0), 1e-8);
}

TEST(FEll, ContinuousAtZeroMass) {
  for (long l : {3L, 5L, 50L})
    for (double x1 : {0.0, 0.4, 0.9}) EXPECT_NEAR(F_ell(l, x1, 0.0), F_ell(l, x1, 2e-6), 1e-5);
}

TEST(FEll, RejectsDomainViolations) {
  EXPECT_THROW(F_ell(1, 0.0, 0.5), InvalidInput);
  EXPECT_THROW(F_ell(3, 0.7, 0.5), InvalidInput);
  EXPECT_THROW(F_ell(3, -0.1, 0.5), InvalidInput);
  EXPECT_FALSE(validate(WorstCaseParams{3, 0.5, 0.5, 0.2}).size());
  EXPECT_TRUE(validate(WorstCaseParams{3, 0.5, 0.5, 1.2}).size());
}

TEST(FEllMonotonicity, PatienceFourAndAbove) {
  VerificationReport r = verify_fl_monotonicity({4, 5, 10, 50, 119}, 100);
  EXPECT_TRUE(r.pass) << r.min_margin;
  EXPECT_GT(r.points_checked, 20000u);
}

TEST(FEllMonotonicity, PatienceThree) {
  VerificationReport r = verify_fl_monotonicity({3}, 100);
  EXPECT_TRUE(r.pass) << "min margin " << r.min_margin << " at x1=" << r.witness[1] << " xN1=" << r.witness[2];
}

TEST(FinalBound, Examples) {
  EXPECT_NEAR(final_bound_mid(3, 0.0), beta_two_sided(), 1e-9);
  EXPECT_GE(final_bound_mid(3, 0.5), beta_two_sided());
  EXPECT_GE(final_bound_mid(119, 0.0), beta_two_sided());
  EXPECT_THROW(final_bound_mid(1, 0.0), InvalidInput);
  EXPECT_THROW(final_bound_mid(120, 0.0), InvalidInput);
}

TEST(FinalBound, MatchesQuadratureAtRandomPoints) {
  Stream rng(3, "final-test");
  for (int i = 0; i < 100; ++i) {
    long l = 2 + static_cast<long>(rng.index(118));
    double x1 = rng.uniform();
    EXPECT_NEAR(final_bound_mid(l, x1), oracle_final(l, x1), 1e-8) << l << " " << x1;
  }
}

TEST(FinalBound, SuitePasses) {
  VerificationReport r = verify_final_bounds();
  EXPECT_TRUE(r.pass) << r.min_margin;
  EXPECT_GE(r.points_checked, 9009u);
}

TEST(Bennett, IntegrandEndpoints) {
  EXPECT_EQ(bennett_integrand(0.3, 1.0), 0.0);
  EXPECT_NEAR(bennett_integrand(0.3, 1e-12), 1.0, 1e-9);
  EXPECT_EQ(bennett_integrand(0.3, 0.0), 1.0);
}

TEST(Bennett, MatchesQuadrature) {
  for (double x1 : {0.0, 0.25, 0.5, 1.0}) {
    double want = attenuation_b(x1) * oracle::simpson([&](double y) { return bennett_integrand(x1, y); }, 0.0, 1.0, 1e-13);
    EXPECT_NEAR(bennett_bound_large(x1), want, 1e-9);
  }
}

TEST(Bennett, AboveBetaOnGrid) {
  VerificationReport r;
  for (int i = 0; i <= 1000; ++i) r.observe(bennett_bound_large(i / 1000.0) - beta_two_sided(), {i / 1000.0});
  r.finish();
  EXPECT_TRUE(r.pass) << r.min_margin;
}

TEST(Bennett, ValueAtOneReachesStatedConstant) { EXPECT_GE(bennett_bound_large(1.0), 0.5803 - 1e-6); }

TEST(BProperties, SuitePasses) {
  VerificationReport r = verify_b_properties(1000);
  EXPECT_TRUE(r.pass) << r.min_margin;
  EXPECT_EQ(b_property_margin(0.0), 0.0);
  EXPECT_GT(b_property_margin(1.0), 0.0);
}

TEST(Exchange, Examples) {
  for (double x1 : {0.0, 0.3})
    for (double xN1 : {0.0, 0.5}) EXPECT_NEAR(exchange_integral(x1, xN1, 0.0), 0.0, 1e-15);
  EXPECT_GE(exchange_integral(0.0, 0.0, 1.0), 0.0);
}

TEST(Exchange, SuitePasses) {
  VerificationReport r = verify_exchange_l2(50);
  EXPECT_TRUE(r.pass) << r.min_margin;
  EXPECT_GT(r.points_checked, 60000u);
}

TEST(Verification, Deterministic) {
  auto a = verify_final_bounds(200), b = verify_final_bounds(200);
  EXPECT_EQ(a.min_margin, b.min_margin);
  EXPECT_EQ(a.witness, b.witness);
  EXPECT_EQ(a.points_checked, b.points_checked);
  EXPECT_THROW(verify_b_properties(0), InvalidInput);
}
