#pragma once

// Gaussian approximation of a latent Gaussian model with binomial
// observations: eta = A x, x ~ N(0, Q^-1), y_r ~ Bin(n_r, g^-1(eta_r)).

#include <cmath>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "diagmeta/links.hpp"
#include "diagmeta/numeric.hpp"

namespace diagmeta {

struct LatentModel {
  Link link = Link::logit;
  Eigen::VectorXd y;
  Eigen::VectorXd n;
  Eigen::MatrixXd A;

  int dim() const { return static_cast<int>(A.cols()); }

  double log_binomial_constant() const {
    double s = 0;
    for (Eigen::Index r = 0; r < y.size(); ++r) s += log_binomial_coefficient(n[r], y[r]);
    return s;
  }

  /// Log-likelihood (without binomial coefficients) and its derivatives in eta.
  void terms(const Eigen::VectorXd& eta, double& value, Eigen::VectorXd& grad, Eigen::VectorXd& hess) const {
    value = 0;
    grad.resize(eta.size());
    hess.resize(eta.size());
    for (Eigen::Index r = 0; r < eta.size(); ++r) {
      const auto t = binomial_terms(link, y[r], n[r], eta[r]);
      value += t.value;
      grad[r] = t.grad;
      hess[r] = t.hess;
    }
  }

  double loglik(const Eigen::VectorXd& x) const {
    const Eigen::VectorXd eta = A * x;
    double v = 0;
    for (Eigen::Index r = 0; r < eta.size(); ++r) v += binomial_terms(link, y[r], n[r], eta[r]).value;
    return v;
  }
};

struct GaussianApprox {
  Eigen::VectorXd mode;
  Eigen::MatrixXd precision;
  double log_det_precision = 0;
  double loglik = 0;  // at the mode, without binomial coefficients
  int iterations = 0;

  /// Covariance (inverse precision).
  Eigen::MatrixXd covariance() const {
    return precision.llt().solve(Eigen::MatrixXd::Identity(precision.rows(), precision.cols()));
  }
};

struct NewtonOptions {
  double grad_tol = 1e-8;
  int max_iter = 100;
};

namespace detail {

inline double log_det_llt(const Eigen::LLT<Eigen::MatrixXd>& llt) {
  return 2 * llt.matrixLLT().diagonal().array().log().sum();
}

/// Newton maximisation of loglik(A x) - x'Qx/2 over the coordinates not in
/// `fixed` (coordinate index, value). Returns the approximation restricted to
/// the free coordinates in `precision`, with mode over all coordinates.
inline GaussianApprox newton_mode(const LatentModel& m, const Eigen::MatrixXd& Q, Eigen::VectorXd x,
                                  std::optional<std::pair<int, double>> fixed, const NewtonOptions& opt) {
  const int d = m.dim();
  std::vector<int> free;
  for (int i = 0; i < d; ++i)
    if (!fixed || fixed->first != i) free.push_back(i);
  if (fixed) x[fixed->first] = fixed->second;
  const int k = static_cast<int>(free.size());

  auto objective = [&](const Eigen::VectorXd& v) { return m.loglik(v) - 0.5 * v.dot(Q * v); };

  Eigen::VectorXd lg, lh;
  double lv = 0;
  Eigen::VectorXd grad(k);
  Eigen::MatrixXd H(k, k);
  Eigen::LLT<Eigen::MatrixXd> llt;
  auto evaluate = [&](const Eigen::VectorXd& v) {
    const Eigen::VectorXd eta = m.A * v;
    m.terms(eta, lv, lg, lh);
    const Eigen::VectorXd gfull = m.A.transpose() * lg - Q * v;
    for (int a = 0; a < k; ++a) grad[a] = gfull[free[a]];
    // H = Q - A' diag(lh) A on the free block
    Eigen::MatrixXd Af(m.A.rows(), k);
    Eigen::MatrixXd Qf(k, k);
    for (int a = 0; a < k; ++a) {
      Af.col(a) = m.A.col(free[a]);
      for (int b = 0; b < k; ++b) Qf(a, b) = Q(free[a], free[b]);
    }
    H = Qf - Af.transpose() * lh.asDiagonal() * Af;
    llt.compute(H);
    if (llt.info() != Eigen::Success) throw NumericError("latent mode: negative Hessian not positive definite");
  };

  GaussianApprox g;
  if (k == 0) {
    const Eigen::VectorXd eta = m.A * x;
    m.terms(eta, lv, lg, lh);
    g.mode = x;
    g.precision = Eigen::MatrixXd(0, 0);
    g.loglik = lv;
    return g;
  }
  evaluate(x);
  double fx = lv - 0.5 * x.dot(Q * x);
  bool converged = false;
  int it = 0;
  for (; it < opt.max_iter; ++it) {
    const Eigen::VectorXd step = llt.solve(grad);
    const double decrement = grad.dot(step);
    const bool small = grad.cwiseAbs().maxCoeff() < opt.grad_tol;
    Eigen::VectorXd xn = x;
    double fn = kNegInf;
    double s = 1;
    for (int h = 0; h < 40; ++h, s *= 0.5) {
      for (int a = 0; a < k; ++a) xn[free[a]] = x[free[a]] + s * step[a];
      fn = objective(xn);
      if (std::isfinite(fn) && fn >= fx - 1e-12 * (1 + std::abs(fx))) break;
    }
    if (!std::isfinite(fn)) throw NumericError("latent mode: objective not finite");
    x = xn;
    fx = fn;
    evaluate(x);
    // one polishing step after the tolerance is met
    if (small) {
      converged = true;
      break;
    }
    if (decrement < 1e-24 && grad.cwiseAbs().maxCoeff() < 1e-5) {
      converged = true;  // at the floating-point floor
      break;
    }
  }
  if (!converged && grad.cwiseAbs().maxCoeff() < opt.grad_tol) converged = true;
  if (!converged) throw NumericError("latent mode: Newton did not converge within " + std::to_string(opt.max_iter) + " iterations");

  g.mode = x;
  g.precision = H;
  g.log_det_precision = log_det_llt(llt);
  g.loglik = lv;
  g.iterations = it + 1;
  return g;
}

}  // namespace detail

/// Conditional mode of the latent field and the Gaussian approximation there.
inline GaussianApprox latent_conditional_mode(const LatentModel& m, const Eigen::MatrixXd& Q,
                                              const NewtonOptions& opt = {}) {
  return detail::newton_mode(m, Q, Eigen::VectorXd::Zero(m.dim()), std::nullopt, opt);
}

/// Laplace approximation of log p(y | theta) given the prior precision Q(theta).
/// Equals log p(y, x*, theta) - log p_G(x* | y, theta) without the prior on theta.
struct LaplaceEvaluation {
  double log_evidence = 0;
  double correction = 0;  // included in log_evidence when requested
  GaussianApprox approx;
};

/// Second-order term of the Laplace expansion of log p(y | theta):
///   1/8 f_ijkl S_ij S_kl + 1/8 f_ijk f_lmn S_ij S_kl S_mn + 1/12 f_ijk f_lmn S_il S_jm S_kn
/// with S the approximate posterior covariance. The likelihood acts through
/// eta = A x only, so every sum runs over observation rows.
inline double laplace_correction(const LatentModel& m, const GaussianApprox& g) {
  if (g.precision.size() == 0) return 0;
  const Eigen::MatrixXd S = g.covariance();
  const Eigen::VectorXd eta = m.A * g.mode;
  const Eigen::MatrixXd C = m.A * S * m.A.transpose();
  const Eigen::Index R = eta.size();
  Eigen::VectorXd d3(R), d4(R);
  for (Eigen::Index r = 0; r < R; ++r) {
    if (m.link == Link::logit) {
      const double p = inv_logit(eta[r]), v = p * (1 - p);
      d3[r] = -m.n[r] * v * (1 - 2 * p);
      d4[r] = -m.n[r] * v * (1 - 6 * v);
    } else {
      const double h = 1e-3;
      const double lo = binomial_terms(m.link, m.y[r], m.n[r], eta[r] - h).hess;
      const double mid = binomial_terms(m.link, m.y[r], m.n[r], eta[r]).hess;
      const double hi = binomial_terms(m.link, m.y[r], m.n[r], eta[r] + h).hess;
      d3[r] = (hi - lo) / (2 * h);
      d4[r] = (hi - 2 * mid + lo) / (h * h);
    }
  }
  double t4 = 0, t33 = 0, t33x = 0;
  for (Eigen::Index r = 0; r < R; ++r) {
    t4 += d4[r] * C(r, r) * C(r, r);
    for (Eigen::Index t = 0; t < R; ++t) {
      const double c = C(r, t);
      t33 += d3[r] * d3[t] * C(r, r) * C(t, t) * c;
      t33x += d3[r] * d3[t] * c * c * c;
    }
  }
  const double v = t4 / 8 + t33 / 8 + t33x / 12;
  return std::isfinite(v) ? v : 0.0;
}

inline LaplaceEvaluation laplace_evidence(const LatentModel& m, const Eigen::MatrixXd& Q, double log_det_Q,
                                          bool second_order = false, const NewtonOptions& opt = {}) {
  LaplaceEvaluation e;
  e.approx = latent_conditional_mode(m, Q, opt);
  const auto& x = e.approx.mode;
  e.log_evidence = e.approx.loglik + m.log_binomial_constant() + 0.5 * log_det_Q - 0.5 * x.dot(Q * x) -
                   0.5 * e.approx.log_det_precision;
  if (second_order) {
    e.correction = laplace_correction(m, e.approx);
    e.log_evidence += e.correction;
  }
  return e;
}

/// Full-Laplace marginal of coordinate j given theta: for each node t the
/// remaining coordinates are re-optimised with x_j = t, and
///   log p(x_j = t | y, theta) ~ f(x^(t)) - 0.5 log det H_{-j}(t),
/// splined on `nodes` Gaussian-scaled nodes and evaluated on `grid`.
/// Returns log densities on `grid` normalised by trapezoid.
inline std::vector<double> laplace_coordinate_marginal(const LatentModel& m, const Eigen::MatrixXd& Q,
                                                       const GaussianApprox& g, int j, const std::vector<double>& grid,
                                                       int nodes = 41, double half_width = 6.0) {
  const Eigen::MatrixXd cov = g.covariance();
  const double mu = g.mode[j], sd = std::sqrt(cov(j, j));
  std::vector<double> t(nodes), lv(nodes);
  Eigen::VectorXd start = g.mode;
  const Eigen::VectorXd shift = cov.col(j) / cov(j, j);
  for (int i = 0; i < nodes; ++i) {
    const double z = -half_width + 2 * half_width * i / (nodes - 1);
    t[i] = mu + z * sd;
    // conditional mean of the Gaussian is a good starting point
    Eigen::VectorXd x0 = g.mode + shift * (t[i] - mu);
    const auto c = detail::newton_mode(m, Q, x0, std::pair{j, t[i]}, NewtonOptions{});
    const auto& x = c.mode;
    lv[i] = c.loglik - 0.5 * x.dot(Q * x) - 0.5 * c.log_det_precision;
  }
  const double top = *std::max_element(lv.begin(), lv.end());
  for (auto& v : lv) v -= top;
  NaturalSpline sp(t, lv);
  std::vector<double> out(grid.size()), dens(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    // beyond the node range continue with the Gaussian tail
    double v;
    if (grid[i] < t.front() || grid[i] > t.back()) {
      const double edge = grid[i] < t.front() ? t.front() : t.back();
      const double ze = (edge - mu) / sd, zg = (grid[i] - mu) / sd;
      v = sp(edge) - 0.5 * (zg * zg - ze * ze);
    } else {
      v = sp(grid[i]);
    }
    out[i] = v;
    dens[i] = std::exp(v);
  }
  const double mass = trapezoid(grid, dens);
  const double lm = std::log(mass);
  for (auto& v : out) v -= lm;
  return out;
}

}  // namespace diagmeta
