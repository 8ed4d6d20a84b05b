#pragma once

// One-dimensional posterior marginal stored as a density on a grid.

#include <cmath>
#include <string>
#include <vector>

#include "diagmeta/numeric.hpp"

namespace diagmeta {

class Marginal {
 public:
  Marginal() = default;

  /// Normalises `density` over `x` (increasing) by the trapezoid rule.
  static Marginal from_density(std::string name, std::vector<double> x, std::vector<double> density) {
    if (x.size() < 2 || x.size() != density.size()) throw NumericError("marginal: need a density on >= 2 points");
    Marginal m;
    m.name_ = std::move(name);
    m.x_ = std::move(x);
    m.d_ = std::move(density);
    for (auto& v : m.d_)
      if (!(v >= 0) || !std::isfinite(v)) v = 0;
    const double mass = trapezoid(m.x_, m.d_);
    if (!(mass > 0) || !std::isfinite(mass)) throw NumericError("marginal '" + m.name_ + "' has no mass");
    for (auto& v : m.d_) v /= mass;
    m.summarise();
    return m;
  }

  /// Degenerate marginal at a single value.
  static Marginal spike(std::string name, double value) {
    Marginal m;
    m.name_ = std::move(name);
    m.spike_ = true;
    m.x_ = {value};
    m.d_ = {1.0};
    m.mean_ = value;
    m.sd_ = 0;
    return m;
  }

  const std::string& name() const { return name_; }
  const std::vector<double>& x() const { return x_; }
  const std::vector<double>& density() const { return d_; }
  bool is_spike() const { return spike_; }
  double mean() const { return mean_; }
  double sd() const { return sd_; }

  double integral() const { return spike_ ? 1.0 : trapezoid(x_, d_); }

  double cdf(double t) const {
    if (spike_) return t >= x_[0] ? 1.0 : 0.0;
    if (t <= x_.front()) return 0;
    if (t >= x_.back()) return 1;
    const auto it = std::upper_bound(x_.begin(), x_.end(), t);
    const std::size_t i = static_cast<std::size_t>(it - x_.begin()) - 1;
    const double w = (t - x_[i]) / (x_[i + 1] - x_[i]);
    const double dt = d_[i] + w * (d_[i + 1] - d_[i]);
    return cum_[i] + 0.5 * (t - x_[i]) * (d_[i] + dt);
  }

  double quantile(double p) const {
    if (spike_) return x_[0];
    if (!(p > 0 && p < 1)) throw ValidationError("quantile probability must lie in (0,1)");
    return inverse_(p);
  }

 private:
  void summarise() {
    std::vector<double> xd(x_.size()), x2d(x_.size());
    for (std::size_t i = 0; i < x_.size(); ++i) {
      xd[i] = x_[i] * d_[i];
      x2d[i] = x_[i] * x_[i] * d_[i];
    }
    mean_ = trapezoid(x_, xd);
    // second moment about the mean for stability
    for (std::size_t i = 0; i < x_.size(); ++i) x2d[i] = (x_[i] - mean_) * (x_[i] - mean_) * d_[i];
    sd_ = std::sqrt(std::max(0.0, trapezoid(x_, x2d)));
    cum_ = cumulative_trapezoid(x_, d_);
    const double total = cum_.back();
    std::vector<double> cx, cy;
    for (std::size_t i = 0; i < x_.size(); ++i) {
      const double c = cum_[i] / total;
      if (cx.empty() || c > cx.back() + 1e-15) {
        cx.push_back(c);
        cy.push_back(x_[i]);
      }
    }
    if (cx.size() < 2) {
      cx = {0.0, 1.0};
      cy = {x_.front(), x_.back()};
    }
    inverse_ = MonotoneCubic(std::move(cx), std::move(cy));
  }

  std::string name_;
  bool spike_ = false;
  std::vector<double> x_, d_, cum_;
  double mean_ = 0, sd_ = 0;
  MonotoneCubic inverse_;
};

/// Mixture of Gaussians sum_k w_k N(m_k, s_k^2), tabulated on a symmetric grid.
inline Marginal gaussian_mixture_marginal(std::string name, const std::vector<double>& w, const std::vector<double>& m,
                                          const std::vector<double>& s, std::size_t npoints = 512) {
  double lo = kInf, hi = -kInf;
  for (std::size_t k = 0; k < w.size(); ++k) {
    if (w[k] < 1e-12) continue;
    lo = std::min(lo, m[k] - 7 * s[k]);
    hi = std::max(hi, m[k] + 7 * s[k]);
  }
  if (!(hi > lo)) return Marginal::spike(std::move(name), m.empty() ? 0.0 : m[0]);
  const auto x = linspace(lo, hi, npoints);
  std::vector<double> d(npoints, 0.0);
  for (std::size_t k = 0; k < w.size(); ++k) {
    if (w[k] <= 0) continue;
    for (std::size_t i = 0; i < npoints; ++i) d[i] += w[k] * std::exp(normal_logpdf(x[i], m[k], s[k] * s[k]));
  }
  return Marginal::from_density(std::move(name), x, d);
}

}  // namespace diagmeta
