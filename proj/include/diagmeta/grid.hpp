#pragma once

// Hyperparameter grid: mode search, curvature at the mode, and an
// eigenbasis-aligned grid kept where the log density is within `drop` of the
// maximum. Works for any dimension; components may be held fixed.

#include <cmath>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "diagmeta/numeric.hpp"

namespace diagmeta {

struct GridOptions {
  double dz = 0.75;    // step in standard deviations
  double drop = 2.5;   // keep points with log-density drop below this
  double box = 30;     // mode must lie within [-box, box]^k
  int threads = 1;
  std::size_t max_points = 50000;
};

struct HyperPoint {
  Eigen::VectorXd theta;
  Eigen::VectorXd z;  // standardized coordinates of the free components
  double log_posterior = 0;
  double weight = 0;
};

struct HyperGrid {
  std::vector<HyperPoint> points;
  Eigen::VectorXd mode;
  double log_posterior_at_mode = 0;
  Eigen::MatrixXd neg_hessian;  // free components only
  Eigen::MatrixXd transform;    // theta_free = mode_free + transform * z
  std::vector<int> free;        // indices of free components
  double dz = 0.75;
  double log_cell_volume = 0;
  double log_marginal_likelihood = 0;

  int dim() const { return static_cast<int>(mode.size()); }
  int free_dim() const { return static_cast<int>(free.size()); }
};

/// log of the integral of exp(log_posterior) over the grid cells.
inline double marginal_loglik(const HyperGrid& g) {
  std::vector<double> v;
  v.reserve(g.points.size());
  for (auto& p : g.points) v.push_back(p.log_posterior);
  return log_sum_exp(v) + g.log_cell_volume;
}

/// Builds the grid for an unnormalised log posterior `f` over theta (full
/// dimension). `fixed[i]` pins component i. `evaluate(theta)` may return a
/// non-finite value where the density is zero or the inner problem fails.
template <class F>
HyperGrid explore_hyper_grid(F&& f, const std::vector<std::optional<double>>& fixed, Eigen::VectorXd start,
                             const GridOptions& opt = {}) {
  const int n = static_cast<int>(start.size());
  HyperGrid g;
  g.dz = opt.dz;
  for (int i = 0; i < n; ++i) {
    if (i < static_cast<int>(fixed.size()) && fixed[i]) start[i] = *fixed[i];
    else g.free.push_back(i);
  }
  const int k = g.free_dim();
  auto embed = [&](const Eigen::VectorXd& free_part) {
    Eigen::VectorXd t = start;
    for (int a = 0; a < k; ++a) t[g.free[a]] = free_part[a];
    return t;
  };
  auto safe = [&](const Eigen::VectorXd& t) {
    try {
      const double v = f(t);
      return std::isfinite(v) ? v : kNegInf;
    } catch (const NumericError&) {
      return kNegInf;
    }
  };

  if (k == 0) {
    const double v = safe(start);
    if (!std::isfinite(v)) throw NumericError("hyperparameter grid: posterior not finite at the fixed point");
    g.mode = start;
    g.log_posterior_at_mode = v;
    g.points.push_back({start, Eigen::VectorXd(0), v, 1.0});
    g.log_cell_volume = 0;
    g.log_marginal_likelihood = v;
    return g;
  }

  Eigen::VectorXd x0(k);
  for (int a = 0; a < k; ++a) x0[a] = start[g.free[a]];
  auto neg = [&](const Eigen::VectorXd& free_part) { return -safe(embed(free_part)); };
  auto res = bfgs_minimize(neg, x0, 1e-5, 300);
  for (int a = 0; a < k; ++a)
    if (std::abs(res.x[a]) > opt.box)
      throw NumericError("hyperparameter posterior appears unbounded: mode escaped the box [-" +
                         std::to_string(static_cast<int>(opt.box)) + ", " + std::to_string(static_cast<int>(opt.box)) + "]");
  g.mode = embed(res.x);
  g.log_posterior_at_mode = -res.value;

  Eigen::MatrixXd H = fd_hessian(neg, res.x, 5e-3);
  H = 0.5 * (H + H.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
  if (es.info() != Eigen::Success || es.eigenvalues().minCoeff() <= 0)
    throw NumericError("hyperparameter posterior: Hessian at the mode is not positive definite");
  g.neg_hessian = H;
  g.transform = es.eigenvectors() * es.eigenvalues().cwiseInverse().cwiseSqrt().asDiagonal();
  g.log_cell_volume = k * std::log(opt.dz) + std::log(std::abs(g.transform.determinant()));

  const double f0 = g.log_posterior_at_mode;
  auto at = [&](const Eigen::VectorXd& z) { return embed(res.x + g.transform * z); };

  // extent along each axis
  std::vector<int> lo(k), hi(k);
  for (int a = 0; a < k; ++a) {
    for (int dir : {1, -1}) {
      int steps = 0;
      while (steps < 200) {
        Eigen::VectorXd z = Eigen::VectorXd::Zero(k);
        z[a] = dir * (steps + 1) * opt.dz;
        if (f0 - safe(at(z)) > opt.drop) break;
        ++steps;
      }
      (dir > 0 ? hi : lo)[a] = steps;
    }
  }

  std::size_t total = 1;
  for (int a = 0; a < k; ++a) total *= static_cast<std::size_t>(lo[a] + hi[a] + 1);
  if (total > opt.max_points) throw NumericError("hyperparameter grid too large (" + std::to_string(total) + " candidate points)");

  std::vector<Eigen::VectorXd> cand(total);
  for (std::size_t c = 0; c < total; ++c) {
    std::size_t r = c;
    Eigen::VectorXd z(k);
    for (int a = 0; a < k; ++a) {
      const std::size_t w = static_cast<std::size_t>(lo[a] + hi[a] + 1);
      z[a] = (static_cast<int>(r % w) - lo[a]) * opt.dz;
      r /= w;
    }
    cand[c] = z;
  }
  std::vector<double> vals(total);
  parallel_for(total, opt.threads, [&](std::size_t c) { vals[c] = safe(at(cand[c])); });

  for (std::size_t c = 0; c < total; ++c) {
    if (!std::isfinite(vals[c]) || f0 - vals[c] >= opt.drop) continue;
    g.points.push_back({at(cand[c]), cand[c], vals[c], 0.0});
  }
  if (g.points.empty()) throw NumericError("hyperparameter grid is empty");
  double top = kNegInf;
  for (auto& p : g.points) top = std::max(top, p.log_posterior);
  double s = 0;
  for (auto& p : g.points) s += (p.weight = std::exp(p.log_posterior - top));
  for (auto& p : g.points) p.weight /= s;
  g.log_marginal_likelihood = marginal_loglik(g);
  return g;
}

}  // namespace diagmeta
