#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "diagmeta/priors.hpp"

using namespace diagmeta;

namespace {

PcCorrelationSpec strategy3_fig2() {
  PcCorrelationSpec s;
  s.strategy = 3;
  s.rho0 = -0.2;
  s.u1 = -0.8;
  s.a1 = 0.1;
  s.u2 = 0.8;
  s.a2 = 0.1;
  return s;
}

std::vector<VariancePrior> variance_families() {
  return {VariancePrior::pc(3, 0.05),         VariancePrior::pc(1, 0.05),     VariancePrior::tnormal(0, 2),
          VariancePrior::tnormal(0.5, 0.3),   VariancePrior::hcauchy(1.5),    VariancePrior::unif(0, 2),
          VariancePrior::invgamma(0.25, 0.025), VariancePrior::invgamma(2, 1),
          VariancePrior::table({{0.1, 1}, {0.5, 3}, {2, 0.5}})};
}

std::vector<CorrelationPrior> correlation_families() {
  PcCorrelationSpec cath;
  cath.strategy = 1;
  cath.rho0 = -0.1;
  cath.omega = 0.5;
  cath.u1 = -0.95;
  cath.a1 = 0.05;
  return {CorrelationPrior::normal(0, 5), CorrelationPrior::normal(1, 0.5), CorrelationPrior::beta(2, 3),
          CorrelationPrior::pc(cath), CorrelationPrior::pc(strategy3_fig2()),
          CorrelationPrior::table({{-1, 1}, {1, 1}})};
}

}  // namespace

TEST(PcVariance, RateExamples) {
  EXPECT_NEAR(calibrate_pc_variance(3, 0.05), 0.99858, 5e-6);
  EXPECT_NEAR(calibrate_pc_variance(1, 0.05), 2.99573, 5e-6);
  EXPECT_NEAR(calibrate_pc_variance(1, std::exp(-1.0)), 1.0, 1e-15);
}

TEST(PcVariance, RateErrors) {
  EXPECT_THROW(calibrate_pc_variance(0, 0.05), ValidationError);
  EXPECT_THROW(calibrate_pc_variance(-1, 0.05), ValidationError);
  EXPECT_THROW(calibrate_pc_variance(1, 0), ValidationError);
  EXPECT_THROW(calibrate_pc_variance(1, 1), ValidationError);
}

TEST(PcVariance, DensityAtOriginIsRate) {
  const auto p = VariancePrior::pc(1, 0.05);
  EXPECT_NEAR(std::exp(p.native_logdensity(0)), p.rate(), 1e-12);
  // removing the Jacobian sd/2 at a tiny sd
  const double theta = 40;
  const double sd = std::exp(-0.5 * theta);
  EXPECT_NEAR(std::exp(p.log_density_theta(theta) - std::log(sd / 2)), p.rate(), 1e-7);
}

TEST(VarianceTable, UniformRenormalised) {
  const auto p = VariancePrior::table({{0, 7}, {1, 7}, {2, 7}});
  EXPECT_NEAR(std::exp(p.native_logdensity(1.5)), 0.5, 1e-14);
  EXPECT_EQ(p.native_logdensity(2.5), kNegInf);
  EXPECT_EQ(p.scale(), NativeScale::variance);
}

TEST(VarianceTable, Errors) {
  EXPECT_THROW(VariancePrior::table({}), ValidationError);
  EXPECT_THROW(VariancePrior::table({{1, 1}, {0.5, 1}}), ValidationError);
  EXPECT_THROW(VariancePrior::table({{-1, 1}, {1, 1}}), ValidationError);
  EXPECT_THROW(VariancePrior::table({{0, 1}, {1, -1}}), ValidationError);
  EXPECT_THROW(VariancePrior::table({{0, 0}, {1, 0}}), ValidationError);
  EXPECT_TRUE(VariancePrior::table({{0.3, 1}}).is_point_mass());
}

TEST(VarianceFamilies, NativeScales) {
  EXPECT_EQ(VariancePrior::pc(1, 0.1).scale(), NativeScale::sd);
  EXPECT_EQ(VariancePrior::tnormal(0, 1).scale(), NativeScale::sd);
  EXPECT_EQ(VariancePrior::hcauchy(1).scale(), NativeScale::sd);
  EXPECT_EQ(VariancePrior::unif(0, 1).scale(), NativeScale::sd);
  EXPECT_EQ(VariancePrior::invgamma(1, 1).scale(), NativeScale::variance);
}

TEST(VarianceFamilies, InternalScaleJacobianIdentity) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-4, 6);
  for (const auto& p : variance_families()) {
    for (int i = 0; i < 100; ++i) {
      const double theta = u(rng);
      double native, log_jac;
      if (p.scale() == NativeScale::sd) {
        native = std::exp(-theta / 2);
        log_jac = std::log(native) - std::log(2.0);
      } else {
        native = std::exp(-theta);
        log_jac = std::log(native);
      }
      const double want = p.native_logdensity(native) + log_jac;
      const double got = p.log_density_theta(theta);
      if (std::isinf(want)) EXPECT_EQ(got, want);
      else EXPECT_NEAR(got, want, 1e-10) << to_string(p.family()) << " theta=" << theta;
    }
  }
}

TEST(CorrelationFamilies, InternalScaleJacobianIdentity) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-3, 3);
  for (const auto& p : correlation_families()) {
    for (int i = 0; i < 100; ++i) {
      const double z = u(rng);
      const double rho = std::tanh(z);
      const double want = p.native_logdensity(rho) + std::log(1 - rho * rho);
      EXPECT_NEAR(p.log_density_z(z), want, 1e-10) << to_string(p.family()) << " z=" << z;
    }
  }
}

TEST(PcCorrelation, DistanceExamples) {
  EXPECT_EQ(pc_correlation_distance(-0.2, -0.2), 0.0);
  EXPECT_NEAR(pc_correlation_distance(0.5, 0), std::sqrt(-std::log(0.75)), 1e-14);
  EXPECT_NEAR(pc_correlation_distance(0.5, 0), 0.53636, 5e-6);
  EXPECT_GT(pc_correlation_distance(0.9, 0), pc_correlation_distance(0.5, 0));
  EXPECT_EQ(pc_correlation_distance(1, 0), kInf);
}

TEST(PcCorrelation, DistanceMonotoneAwayFromBase) {
  for (double rho0 : {-0.6, -0.1, 0.0, 0.4}) {
    double prev = 0;
    for (double r = rho0 + 0.01; r < 0.999; r += 0.01) {
      const double d = pc_correlation_distance(r, rho0);
      EXPECT_GT(d, prev);
      prev = d;
    }
    prev = 0;
    for (double r = rho0 - 0.01; r > -0.999; r -= 0.01) {
      const double d = pc_correlation_distance(r, rho0);
      EXPECT_GT(d, prev);
      prev = d;
    }
  }
}

TEST(PcCorrelation, DistanceDerivativeMatchesFiniteDifference) {
  for (double rho0 : {-0.2, 0.3})
    for (double r : {-0.9, -0.5, 0.1, 0.6, 0.95}) {
      const double h = 1e-6;
      const double fd =
          std::abs(pc_correlation_distance(r + h, rho0) - pc_correlation_distance(r - h, rho0)) / (2 * h);
      EXPECT_NEAR(pc_correlation_distance_derivative(r, rho0), fd, 1e-6 * (1 + fd));
    }
}

TEST(PcCorrelation, ModeAtBase) {
  for (const auto& p : correlation_families()) {
    if (p.family() != CorrelationFamily::pc) continue;
    const double rho0 = p.calibrated()->rho0;
    // on the rho scale the density grows again towards +-1, so only a local peak
    double best = -1, bestv = kNegInf;
    for (double r = rho0 - 0.05; r < rho0 + 0.05; r += 1e-4) {
      const double v = p.native_logdensity(r);
      if (v > bestv) bestv = v, best = r;
    }
    EXPECT_NEAR(best, rho0, 2e-4);
    double bz = 0, bzv = kNegInf;
    for (double z = -3; z < 3; z += 1e-4) {
      const double v = p.log_density_z(z);
      if (v > bzv) bzv = v, bz = z;
    }
    EXPECT_NEAR(std::tanh(bz), rho0, 2e-4);
  }
}

TEST(PcCorrelation, ContinuousDensityAtBase) {
  const auto p = CorrelationPrior::pc(strategy3_fig2());
  const auto& c = *p.calibrated();
  EXPECT_NEAR(c.omega * c.lambda_left, (1 - c.omega) * c.lambda_right, 1e-9);
  EXPECT_NEAR(p.native_logdensity(-0.2 - 1e-9), p.native_logdensity(-0.2 + 1e-9), 1e-6);
}

TEST(PcCorrelation, Infeasible) {
  PcCorrelationSpec s;
  s.strategy = 1;
  s.rho0 = 0;
  s.omega = 0.5;
  s.u1 = -1e-9;
  s.a1 = 0.5;
  try {
    calibrate_pc_correlation(s);
    FAIL() << "expected infeasible contrast";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("infeasible contrast"), std::string::npos);
  }
  s.a1 = 0.7;
  EXPECT_THROW(calibrate_pc_correlation(s), ValidationError);
  auto t = strategy3_fig2();
  t.a1 = 0.6;
  t.a2 = 0.5;
  EXPECT_THROW(calibrate_pc_correlation(t), ValidationError);
  t = strategy3_fig2();
  t.u2.reset();
  EXPECT_THROW(calibrate_pc_correlation(t), ValidationError);
  t = strategy3_fig2();
  t.u1 = 0.5;
  EXPECT_THROW(calibrate_pc_correlation(t), ValidationError);
}

TEST(PcCorrelation, SevenSlotParsing) {
  const auto p = make_correlation_prior("pc", {1.0, -0.1, 0.5, -0.95, 0.05, std::nullopt, std::nullopt});
  ASSERT_TRUE(p.calibrated());
  EXPECT_NEAR(p.calibrated()->cdf(-0.95), 0.05, 1e-9);
  EXPECT_NEAR(p.calibrated()->cdf(-0.1), 0.5, 1e-12);
  EXPECT_THROW(make_correlation_prior("PC", {1.0, -0.1, 0.5}), ValidationError);
  EXPECT_THROW(make_correlation_prior("PC", {4.0, -0.1, 0.5, -0.95, 0.05, std::nullopt, std::nullopt}),
               ValidationError);
  EXPECT_THROW(make_correlation_prior("PC", {1.0, -0.1, std::nullopt, -0.95, 0.05, std::nullopt, std::nullopt}),
               ValidationError);
}

TEST(NormalCorrelation, LogDensityAtZero) {
  // Normal(0, variance 5) on 2z, with d(2z)/dz = 2
  const auto p = CorrelationPrior::normal(0, 5);
  const double expect = -0.5 * std::log(2 * M_PI * 5) + std::log(2.0);
  EXPECT_NEAR(p.log_density_z(0), expect, 1e-14);
  EXPECT_NEAR(p.log_density_z(0), -1.03051, 5e-6);
}

TEST(CorrelationTable, UniformDensity) {
  const auto p = CorrelationPrior::table({{-1, 3}, {0, 3}, {1, 3}});
  for (double r : {-0.9, -0.2, 0.0, 0.7}) {
    EXPECT_NEAR(std::exp(p.native_logdensity(r)), 0.5, 1e-14);
    const double z = std::atanh(r);
    EXPECT_NEAR(p.log_density_z(z), std::log(1 - r * r) + std::log(0.5), 1e-12);
  }
  EXPECT_THROW(CorrelationPrior::table({{-1.5, 1}, {1, 1}}), ValidationError);
  EXPECT_THROW(CorrelationPrior::table({{1.0, 1}}), ValidationError);
}

TEST(CorrelationBeta, Symmetric) {
  const auto p = CorrelationPrior::beta(2, 2);
  EXPECT_NEAR(p.native_logdensity(0.3), p.native_logdensity(-0.3), 1e-14);
  // Beta(2,2) on (rho+1)/2 at rho=0: 6*0.25 / 2
  EXPECT_NEAR(std::exp(p.native_logdensity(0)), 0.75, 1e-14);
}

TEST(FamilyNames, CaseInsensitive) {
  EXPECT_EQ(make_variance_prior("pc", {3.0, 0.05}).family(), VarianceFamily::pc);
  EXPECT_EQ(make_variance_prior("INVGAMMA", {1.0, 1.0}).family(), VarianceFamily::invgamma);
  EXPECT_EQ(make_variance_prior("tNormal", {0.0, 1.0}).family(), VarianceFamily::tnormal);
  EXPECT_EQ(make_variance_prior("hcauchy", {1.0}).family(), VarianceFamily::hcauchy);
  EXPECT_EQ(make_variance_prior("Unif", {0.0, 1.0}).family(), VarianceFamily::unif);
  EXPECT_EQ(make_variance_prior("TABLE", {0.0, 1.0, 1.0, 1.0}).family(), VarianceFamily::table);
  EXPECT_EQ(make_correlation_prior("normal", {0.0, 5.0}).family(), CorrelationFamily::normal);
  EXPECT_EQ(make_correlation_prior("BETA", {1.0, 1.0}).family(), CorrelationFamily::beta);
  EXPECT_THROW(make_variance_prior("gamma", {1.0, 1.0}), ValidationError);
  EXPECT_THROW(make_variance_prior("pc", {3.0}), ValidationError);
  EXPECT_THROW(make_correlation_prior("cauchy", {1.0}), ValidationError);
  PriorSpec s;
  s.var_prior = "invWishart";
  EXPECT_TRUE(s.uses_wishart());
  EXPECT_TRUE(s.build().wishart.has_value());
}

TEST(PriorSpec, SecondVarianceDefaultsToFirst) {
  PriorSpec s;
  s.var_prior = "PC";
  s.var_par = {3.0, 0.05};
  const auto c = s.build();
  EXPECT_EQ(c.var2.family(), VarianceFamily::pc);
  EXPECT_DOUBLE_EQ(c.var2.rate(), c.var1.rate());
  s.var2_prior = "Invgamma";
  s.var2_par = {1.0, 0.1};
  EXPECT_EQ(s.build().var2.family(), VarianceFamily::invgamma);
}

TEST(PriorConfig, PointMassesFixComponents) {
  PriorConfig c;
  c.var2 = VariancePrior::table({{0.25, 1}});
  c.cor = CorrelationPrior::table({{0.5, 1}});
  const auto f = c.fixed_components();
  EXPECT_FALSE(f[0]);
  EXPECT_NEAR(*f[1], -std::log(0.25), 1e-14);
  EXPECT_NEAR(*f[2], std::atanh(0.5), 1e-14);
}

TEST(Wishart, SingularCovarianceRejected) {
  const WishartPrior w(4, Eigen::Matrix2d::Identity());
  Eigen::Matrix2d S;
  S << 1, 1, 1, 1;
  EXPECT_THROW(w.log_density(S), ValidationError);
  S << 1, -1, -1, 1;
  EXPECT_THROW(w.log_density(S), ValidationError);
  EXPECT_THROW(w.log_density_theta(Eigen::Vector3d(0, 0, kInf)), ValidationError);
  EXPECT_THROW(WishartPrior(0.5, Eigen::Matrix2d::Identity()), ValidationError);
  EXPECT_THROW(make_wishart_prior({4.0, 1.0, 1.0}), ValidationError);
}

TEST(Wishart, ThetaJacobianByFiniteDifferences) {
  // |d(S11, S22, S12) / d theta| from a numeric Jacobian of the covariance map
  const WishartPrior w(5, (Eigen::Matrix2d() << 2, 0.3, 0.3, 1).finished());
  const Eigen::Vector3d th(0.4, -0.7, 0.35);
  Eigen::Matrix3d J;
  const double h = 1e-6;
  for (int k = 0; k < 3; ++k) {
    Eigen::Vector3d a = th, b = th;
    a[k] += h;
    b[k] -= h;
    const Eigen::Matrix2d Sa = covariance_from_theta(a), Sb = covariance_from_theta(b);
    J(0, k) = (Sa(0, 0) - Sb(0, 0)) / (2 * h);
    J(1, k) = (Sa(1, 1) - Sb(1, 1)) / (2 * h);
    J(2, k) = (Sa(0, 1) - Sb(0, 1)) / (2 * h);
  }
  const double expect = w.log_density(covariance_from_theta(th)) + std::log(std::abs(J.determinant()));
  EXPECT_NEAR(w.log_density_theta(th), expect, 1e-7);
}

TEST(Tabulate, PcPreviewDecreasing) {
  const auto p = VariancePrior::pc(1, 0.05);
  const auto t = tabulate_prior(p, linspace(0, 4, 401));
  ASSERT_EQ(t.density.size(), 401u);
  for (std::size_t i = 1; i < t.density.size(); ++i) EXPECT_LT(t.density[i], t.density[i - 1]);
  EXPECT_NEAR(trapezoid(t.x, t.density), 1.0, 1e-12);
}

TEST(Tabulate, UniformSd) {
  const auto t = tabulate_prior(VariancePrior::unif(0, 2), linspace(0, 2, 101));
  for (double d : t.density) EXPECT_NEAR(d, 0.5, 1e-12);
  EXPECT_THROW(tabulate_prior(VariancePrior::unif(0, 2), {}), ValidationError);
}

TEST(Tabulate, PcCorrelationUnitMass) {
  const auto t = tabulate_prior(CorrelationPrior::pc(strategy3_fig2()), linspace(-0.999, 0.999, 2001));
  EXPECT_NEAR(trapezoid(t.x, t.density), 1.0, 1e-3);
}
