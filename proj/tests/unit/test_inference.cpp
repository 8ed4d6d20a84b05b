#include <gtest/gtest.h>

#include <cmath>

#include "diagmeta/accuracy.hpp"
#include "diagmeta/json_io.hpp"
#include "fixtures.hpp"

using namespace diagmeta;

namespace {

const FitResult& telomerase_fit() {
  static const FitResult f = run_fit(fixtures::telomerase_request(4000, 3));
  return f;
}

MetaModel telomerase_model() {
  return MetaModel(build_design(builtin::telomerase(), ModelSpec{}), fixtures::telomerase_priors().build());
}

}  // namespace

TEST(MetaModel, PrecisionInvertsStudyCovariance) {
  const auto m = telomerase_model();
  const Eigen::Vector3d th(0.8, -1.1, -0.9);
  const Eigen::MatrixXd Q = m.precision(th);
  const Eigen::MatrixXd C = Q.inverse();
  const double v1 = std::exp(-th[0]), v2 = std::exp(-th[1]), r = std::tanh(th[2]);
  EXPECT_NEAR(C(0, 0), 1000, 1e-8);
  EXPECT_NEAR(C(1, 1), 1000, 1e-8);
  for (int i = 0; i < 10; ++i) {
    const int a = 2 + 2 * i;
    EXPECT_NEAR(C(a, a), v1, 1e-12);
    EXPECT_NEAR(C(a + 1, a + 1), v2, 1e-12);
    EXPECT_NEAR(C(a, a + 1), r * std::sqrt(v1 * v2), 1e-12);
    if (i > 0) EXPECT_NEAR(C(a, a - 2), 0.0, 1e-12);
  }
  EXPECT_NEAR(m.log_det_precision(th), std::log(Q.determinant()), 1e-8);
}

TEST(MetaModel, LaplaceModeIsStationary) {
  const auto m = telomerase_model();
  const Eigen::Vector3d th(1.5, -1.0, -1.2);
  const auto e = m.laplace(th);
  const auto& L = m.latent();
  const Eigen::VectorXd eta = L.A * e.approx.mode;
  Eigen::VectorXd score(eta.size());
  for (Eigen::Index r = 0; r < eta.size(); ++r) score[r] = L.y[r] - L.n[r] / (1 + std::exp(-eta[r]));
  const Eigen::VectorXd grad = L.A.transpose() * score - m.precision(th) * e.approx.mode;
  EXPECT_LT(grad.cwiseAbs().maxCoeff(), 1e-7);
}

TEST(MetaModel, PriorConstantShiftsLogPosterior) {
  const auto m = telomerase_model();
  const auto pc = fixtures::telomerase_priors().build();
  for (const Eigen::Vector3d th : {Eigen::Vector3d(1, -1, -1), Eigen::Vector3d(2, 0, 0.3)}) {
    const double diff = m.log_posterior_theta(th) - m.laplace(th).log_evidence;
    EXPECT_NEAR(diff, pc.log_density(th), 1e-10);
  }
}

TEST(MetaModel, RejectsBadFixedVariance) {
  EXPECT_THROW(MetaModel(build_design(builtin::telomerase(), ModelSpec{}), PriorConfig{}, 0.0), ValidationError);
}

TEST(HyperGrid, TelomeraseLayout) {
  const auto& g = telomerase_fit().grid;
  EXPECT_GE(g.points.size(), 27u);
  EXPECT_LE(g.points.size(), 300u);
  double s = 0, top = kNegInf;
  for (auto& p : g.points) {
    s += p.weight;
    top = std::max(top, p.log_posterior);
    EXPECT_LT(g.log_posterior_at_mode - p.log_posterior, 2.5);
  }
  EXPECT_NEAR(s, 1.0, 1e-12);
  EXPECT_LE(top, g.log_posterior_at_mode + 1e-6);
  EXPECT_NEAR(marginal_loglik(g), telomerase_fit().mlik, 1e-12);
}

TEST(HyperGrid, ModeNearPublishedMedians) {
  const auto& m = telomerase_fit().grid.mode;
  EXPECT_NEAR(std::exp(-m[0]), 0.195, 0.08);
  EXPECT_NEAR(std::exp(-m[1]), 3.137, 1.0);
  EXPECT_NEAR(std::tanh(m[2]), -0.888, 0.08);
}

TEST(HyperGrid, LikelihoodScalingShiftsMlik) {
  auto f = [](const Eigen::VectorXd& t) {
    return -0.5 * (t[0] * t[0] + 2 * (t[1] - 1) * (t[1] - 1) + 0.5 * t[2] * t[2] + 0.3 * t[0] * t[1]);
  };
  const auto g0 = explore_hyper_grid(f, {}, Eigen::VectorXd::Zero(3));
  const double c = std::log(7.0);
  const auto g1 = explore_hyper_grid([&](const Eigen::VectorXd& t) { return f(t) + c; }, {}, Eigen::VectorXd::Zero(3));
  EXPECT_NEAR(g1.log_marginal_likelihood - g0.log_marginal_likelihood, c, 1e-8);
  EXPECT_EQ(g0.points.size(), g1.points.size());
}

TEST(HyperGrid, UnboundedPosteriorDetected) {
  auto f = [](const Eigen::VectorXd& t) { return t[0] - 0.5 * t[1] * t[1] - 0.5 * t[2] * t[2]; };
  try {
    explore_hyper_grid(f, {}, Eigen::VectorXd::Zero(3));
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("unbounded"), std::string::npos);
  }
}

TEST(HyperGrid, FixedComponentsStayFixed) {
  auto f = [](const Eigen::VectorXd& t) { return -0.5 * (t[0] * t[0] + t[1] * t[1] + t[2] * t[2]); };
  const auto g = explore_hyper_grid(f, {std::nullopt, 0.7, std::nullopt}, Eigen::VectorXd::Zero(3));
  EXPECT_EQ(g.free_dim(), 2);
  for (auto& p : g.points) EXPECT_EQ(p.theta[1], 0.7);
}

TEST(HyperMarginals, TelomeraseSupportAndMass) {
  const auto& f = telomerase_fit();
  const auto& rho = f.hyper_marginal("rho");
  EXPECT_GT(rho.x().front(), -1.0);
  EXPECT_LT(rho.x().back(), 1.0);
  EXPECT_NEAR(rho.integral(), 1.0, 1e-3);
  for (auto n : {"var1", "var2"}) {
    EXPECT_GT(f.hyper_marginal(n).x().front(), 0.0);
    EXPECT_NEAR(f.hyper_marginal(n).integral(), 1.0, 1e-3);
  }
  EXPECT_THROW(f.hyper_marginal("tau"), ValidationError);
  EXPECT_THROW(f.fixed_marginal("alpha"), ValidationError);
}

TEST(HyperMarginals, PointMassPriorGivesSpike) {
  auto r = fixtures::telomerase_request(200);
  r.priors.var2_prior = "Table";
  r.priors.var2_par = {1.0, 1.0};
  const auto f = run_fit(r);
  const auto& v2 = f.hyper_marginal("var2");
  EXPECT_TRUE(v2.is_spike());
  EXPECT_EQ(v2.mean(), 1.0);
  EXPECT_EQ(v2.quantile(0.3), 1.0);
  EXPECT_EQ(f.grid.free_dim(), 2);
  for (auto& p : f.grid.points) EXPECT_EQ(p.theta[1], 0.0);
}

TEST(LatentMarginals, SingleComponentIsGaussian) {
  const auto m = gaussian_mixture_marginal("x", {1.0}, {0.4}, {1.3});
  EXPECT_NEAR(m.mean(), 0.4, 1e-9);
  EXPECT_NEAR(m.sd(), 1.3, 2e-4);
  EXPECT_NEAR(m.quantile(0.5), m.mean(), 1e-6);
  EXPECT_NEAR(m.quantile(0.975), 0.4 + 1.959964 * 1.3, 5e-3);
}

TEST(LatentMarginals, MixtureMomentsMatchGridMoments) {
  const auto& f = telomerase_fit();
  const auto [m, S] = f.latent_moments(0, 1);
  EXPECT_NEAR(f.fixed_marginal("mu").mean(), m[0], 1e-6);
  EXPECT_NEAR(f.fixed_marginal("nu").mean(), m[1], 1e-6);
  EXPECT_NEAR(f.fixed_marginal("mu").sd(), std::sqrt(S(0, 0)), 1e-4);
  ASSERT_EQ(f.mu_nu_correlation.size(), 1u);
  EXPECT_NEAR(f.mu_nu_correlation[0].value, S(0, 1) / std::sqrt(S(0, 0) * S(1, 1)), 1e-12);
  EXPECT_EQ(f.mu_nu_correlation[0].level, "");
}

TEST(Sampling, EmpiricalMeanMatchesMarginal) {
  const auto& f = telomerase_fit();
  ASSERT_TRUE(f.samples);
  const auto& s = *f.samples;
  for (int j : {0, 1}) {
    const auto& m = f.fixed[j];
    const double mean = s.latent.col(j).mean();
    EXPECT_LT(std::abs(mean - m.mean()), 3 * m.sd() / std::sqrt(static_cast<double>(s.size()))) << m.name();
  }
}

TEST(Sampling, DeterministicInSeed) {
  const auto& f = telomerase_fit();
  const auto a = sample_posterior(f, 1500, 42), b = sample_posterior(f, 1500, 42), c = sample_posterior(f, 1500, 43);
  EXPECT_TRUE(a.latent == b.latent);
  EXPECT_TRUE(a.theta == b.theta);
  EXPECT_FALSE(a.latent == c.latent);
  const auto t = sample_posterior(f, 1500, 42, 3);
  EXPECT_TRUE(a.latent == t.latent);
  EXPECT_THROW(sample_posterior(f, 0, 1), ValidationError);
}

TEST(Fit, NsampleMustBePositive) {
  EXPECT_THROW(run_fit(fixtures::telomerase_request(0)), ValidationError);
  EXPECT_THROW(run_fit(fixtures::telomerase_request(-5)), ValidationError);
  auto f = telomerase_fit();
  f.samples.reset();
  EXPECT_THROW(fitted_study_measures(f, AccuracyType::TPR), ValidationError);
}

TEST(Fit, TimingsRecorded) {
  const auto& f = telomerase_fit();
  EXPECT_GE(f.timings.pre, 0);
  EXPECT_GT(f.timings.run, 0);
  EXPECT_NEAR(f.timings.total(), f.timings.pre + f.timings.run + f.timings.post, 1e-15);
}

TEST(Fit, ThreadCountDoesNotChangeResults) {
  auto r = fixtures::telomerase_request(1000, 9);
  const auto a = run_fit(r);
  r.options.threads = 3;
  const auto b = run_fit(r);
  EXPECT_EQ(a.mlik, b.mlik);
  EXPECT_EQ(a.fixed_marginal("nu").mean(), b.fixed_marginal("nu").mean());
  EXPECT_TRUE(a.samples->latent == b.samples->latent);
}

TEST(Laplace, SecondOrderTermInOneDimension) {
  // 1-D: 1/8 f4 s^2 + 5/24 f3^2 s^3 with s the posterior variance
  LatentModel m;
  m.y = Eigen::VectorXd::Constant(1, 7);
  m.n = Eigen::VectorXd::Constant(1, 10);
  m.A = Eigen::MatrixXd::Ones(1, 1);
  const Eigen::MatrixXd Q = Eigen::MatrixXd::Constant(1, 1, 0.5);
  const auto g = latent_conditional_mode(m, Q);
  const double p = 1 / (1 + std::exp(-g.mode[0])), v = p * (1 - p);
  const double s = 1 / (10 * v + 0.5);
  const double f3 = -10 * v * (1 - 2 * p), f4 = -10 * v * (1 - 6 * v);
  EXPECT_NEAR(laplace_correction(m, g), f4 * s * s / 8 + 5.0 / 24 * f3 * f3 * s * s * s, 1e-12);
  const auto plain = laplace_evidence(m, Q, std::log(0.5)), corrected = laplace_evidence(m, Q, std::log(0.5), true);
  EXPECT_NEAR(corrected.log_evidence - plain.log_evidence, corrected.correction, 1e-14);
}

TEST(Laplace, SecondOrderTermOtherLinksMatchesFiniteDifferences) {
  // probit derivatives come from differencing the Hessian; check against the logit closed form path
  LatentModel m;
  m.y = Eigen::VectorXd::Constant(1, 3);
  m.n = Eigen::VectorXd::Constant(1, 12);
  m.A = Eigen::MatrixXd::Ones(1, 1);
  m.link = Link::probit;
  const Eigen::MatrixXd Q = Eigen::MatrixXd::Ones(1, 1);
  const auto g = latent_conditional_mode(m, Q);
  const double h = 1e-2;
  auto hess = [&](double e) { return binomial_terms(Link::probit, 3, 12, e).hess; };
  const double e = g.mode[0];
  const double f3 = (hess(e + h) - hess(e - h)) / (2 * h);
  const double f4 = (hess(e + h) - 2 * hess(e) + hess(e - h)) / (h * h);
  const double s = 1 / g.precision(0, 0);
  EXPECT_NEAR(laplace_correction(m, g), f4 * s * s / 8 + 5.0 / 24 * f3 * f3 * s * s * s, 1e-4);
}
