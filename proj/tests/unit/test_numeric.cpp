#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <vector>

#include "diagmeta/links.hpp"
#include "diagmeta/numeric.hpp"

using namespace diagmeta;

TEST(Links, ParseAndName) {
  EXPECT_EQ(parse_link("Probit"), Link::probit);
  EXPECT_EQ(parse_link("CLOGLOG"), Link::cloglog);
  EXPECT_EQ(to_string(Link::logit), "logit");
  EXPECT_THROW(parse_link("log"), ValidationError);
}

TEST(Links, InverseRoundTrip) {
  for (auto l : {Link::logit, Link::probit, Link::cloglog})
    for (double p : {1e-6, 0.01, 0.3, 0.5, 0.77, 0.999}) EXPECT_NEAR(inverse_link(l, apply_link(l, p)), p, 1e-12 * (1 + p));
}

TEST(Links, KnownValues) {
  EXPECT_NEAR(inverse_link(Link::logit, 0.0), 0.5, 1e-15);
  EXPECT_NEAR(inverse_link(Link::probit, 1.959963984540054), 0.975, 1e-12);
  EXPECT_NEAR(inverse_link(Link::cloglog, 0.0), 1 - std::exp(-1.0), 1e-15);
}

class BinomialTermsTest : public ::testing::TestWithParam<Link> {};

TEST_P(BinomialTermsTest, DerivativesMatchFiniteDifferences) {
  const Link l = GetParam();
  const double h = 1e-5;
  for (double y : {0.0, 3.0, 17.0, 20.0})
    for (double eta : {-4.0, -1.3, 0.0, 0.4, 2.5}) {
      const auto t = binomial_terms(l, y, 20, eta);
      const auto tp = binomial_terms(l, y, 20, eta + h), tm = binomial_terms(l, y, 20, eta - h);
      EXPECT_NEAR(t.grad, (tp.value - tm.value) / (2 * h), 1e-5 * (1 + std::abs(t.grad)));
      EXPECT_NEAR(t.hess, (tp.grad - tm.grad) / (2 * h), 1e-5 * (1 + std::abs(t.hess)));
    }
}

TEST_P(BinomialTermsTest, ValueIsBinomialLogLikelihood) {
  const Link l = GetParam();
  for (double eta : {-2.0, 0.3, 1.5}) {
    const double p = inverse_link(l, eta);
    const double expect = 7 * std::log(p) + 5 * std::log1p(-p);
    EXPECT_NEAR(binomial_terms(l, 7, 12, eta).value, expect, 1e-11);
  }
}

TEST_P(BinomialTermsTest, ConcaveInEta) {
  for (double eta = -8; eta <= 8; eta += 0.5) EXPECT_LT(binomial_terms(GetParam(), 4, 9, eta).hess, 0.0);
}

INSTANTIATE_TEST_SUITE_P(AllLinks, BinomialTermsTest, ::testing::Values(Link::logit, Link::probit, Link::cloglog),
                         [](const auto& info) { return to_string(info.param); });

TEST(Links, ProbitFarTailFinite) {
  const auto t = binomial_terms(Link::probit, 5, 5, -40);
  EXPECT_TRUE(std::isfinite(t.value));
  EXPECT_TRUE(std::isfinite(t.grad));
  EXPECT_NEAR(t.grad / 5, 40.0, 0.1);
}

TEST(Numeric, LogBinomialCoefficient) {
  EXPECT_NEAR(log_binomial_coefficient(10, 3), std::log(120.0), 1e-12);
  EXPECT_NEAR(log_binomial_coefficient(5, 0), 0.0, 1e-14);
}

TEST(Numeric, LogSumExpStable) {
  std::vector<double> v{1000, 1000};
  EXPECT_NEAR(log_sum_exp(v), 1000 + std::log(2.0), 1e-12);
  EXPECT_NEAR(log1p_exp(-800), 0.0, 1e-300);
  EXPECT_NEAR(log1p_exp(800), 800, 1e-12);
}

TEST(Numeric, TrapezoidAndCumulative) {
  const auto x = linspace(0, 1, 1001);
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = 3 * x[i] * x[i];
  EXPECT_NEAR(trapezoid(x, y), 1.0, 1e-6);
  const auto c = cumulative_trapezoid(x, y);
  EXPECT_EQ(c.front(), 0.0);
  EXPECT_NEAR(c[500], 0.125, 1e-6);
}

TEST(Numeric, Linspace) {
  const auto x = linspace(-1, 1, 5);
  EXPECT_EQ(x, (std::vector<double>{-1, -0.5, 0, 0.5, 1}));
}

TEST(Numeric, Bisect) {
  EXPECT_NEAR(bisect([](double x) { return x * x - 2; }, 0, 2), std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(bisect([](double x) { return std::cos(x); }, 0, 3), M_PI / 2, 1e-12);
}

TEST(Numeric, MonotoneCubicPreservesMonotonicity) {
  std::vector<double> x{0, 1, 2, 3, 4}, y{0, 0.1, 0.1, 0.9, 1};
  MonotoneCubic f(x, y);
  double prev = -1;
  for (double t = -0.5; t <= 4.5; t += 0.01) {
    const double v = f(t);
    EXPECT_GE(v, prev - 1e-15);
    prev = v;
  }
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_DOUBLE_EQ(f(x[i]), y[i]);
}

TEST(Numeric, NaturalSplineInterpolatesCubicInterior) {
  const auto x = linspace(-3, 3, 61);
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = -0.5 * x[i] * x[i];
  NaturalSpline s(x, y);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(s(x[i]), y[i], 1e-12);
  EXPECT_NEAR(s(0.05), -0.5 * 0.0025, 1e-4);
}

TEST(Numeric, ParallelForCoversRange) {
  std::vector<int> hits(1000, 0);
  parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i] += 1; });
  for (int h : hits) EXPECT_EQ(h, 1);
}

TEST(Numeric, FiniteDifferences) {
  auto f = [](const Eigen::VectorXd& v) { return v[0] * v[0] * v[1] + std::sin(v[1]); };
  Eigen::VectorXd x(2);
  x << 0.7, -0.4;
  const auto g = fd_gradient(f, x);
  EXPECT_NEAR(g[0], 2 * 0.7 * -0.4, 1e-7);
  EXPECT_NEAR(g[1], 0.49 + std::cos(-0.4), 1e-7);
  const auto H = fd_hessian(f, x);
  EXPECT_NEAR(H(0, 0), -0.8, 1e-4);
  EXPECT_NEAR(H(0, 1), 1.4, 1e-4);
  EXPECT_NEAR(H(1, 0), 1.4, 1e-4);
  EXPECT_NEAR(H(1, 1), -std::sin(-0.4), 1e-4);
}

TEST(Numeric, BfgsRosenbrock) {
  auto f = [](const Eigen::VectorXd& v) {
    return 100 * std::pow(v[1] - v[0] * v[0], 2) + std::pow(1 - v[0], 2);
  };
  Eigen::VectorXd x0(2);
  x0 << -1.2, 1.0;
  const auto r = bfgs_minimize(f, x0, 1e-7, 2000);
  EXPECT_NEAR(r.x[0], 1.0, 1e-3);
  EXPECT_NEAR(r.x[1], 1.0, 2e-3);
}

TEST(Numeric, SampleQuantileType7) {
  std::vector<double> s{1, 2, 3, 4};
  EXPECT_DOUBLE_EQ(sample_quantile(s, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(sample_quantile(s, 0.25), 1.75);
  EXPECT_DOUBLE_EQ(sample_quantile(s, 1.0), 4.0);
}
