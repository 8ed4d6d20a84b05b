#pragma once

// Prior families for the two variance components and the correlation of the
// bivariate random effect, evaluated on the internal hyperparameter scale
//   theta = (log precision phi, log precision psi, Fisher z of rho)
// with the Jacobians of the transformation from each family's native scale.

#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "diagmeta/numeric.hpp"

namespace diagmeta {

// ---------------------------------------------------------------------------
// shared helpers

namespace detail {

/// Piecewise-linear density table renormalised to unit trapezoid mass.
struct DensityTable {
  std::vector<double> x, d;

  static DensityTable make(std::vector<std::pair<double, double>> pts, double lo, double hi,
                           const char* what) {
    if (pts.empty()) throw ValidationError(std::string(what) + " table prior needs at least one point");
    DensityTable t;
    for (auto& [x, d] : pts) {
      if (!std::isfinite(x) || !std::isfinite(d)) throw ValidationError(std::string(what) + " table prior: non-finite entry");
      if (x < lo || x > hi) throw ValidationError(std::string(what) + " table prior: support point outside native range");
      if (d < 0) throw ValidationError(std::string(what) + " table prior: negative density");
      if (!t.x.empty() && x <= t.x.back())
        throw ValidationError(std::string(what) + " table prior: support points must be strictly increasing");
      t.x.push_back(x);
      t.d.push_back(d);
    }
    if (t.x.size() > 1) {
      const double mass = trapezoid(t.x, t.d);
      if (!(mass > 0)) throw ValidationError(std::string(what) + " table prior has zero mass");
      for (auto& v : t.d) v /= mass;
    }
    return t;
  }

  bool point_mass() const { return x.size() == 1; }

  double density(double v) const {
    if (point_mass() || v < x.front() || v > x.back()) return 0.0;
    const auto it = std::upper_bound(x.begin(), x.end(), v);
    if (it == x.end()) return d.back();
    const std::size_t i = static_cast<std::size_t>(it - x.begin()) - 1;
    const double w = (v - x[i]) / (x[i + 1] - x[i]);
    return (1 - w) * d[i] + w * d[i + 1];
  }
};

/// log(1 - tanh(z)^2), stable for large |z|.
inline double log_one_minus_tanh2(double z) {
  const double a = std::abs(z);
  return std::log(4.0) - 2 * a - 2 * std::log1p(std::exp(-2 * a));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// variance priors

enum class VarianceFamily { pc, tnormal, hcauchy, unif, invgamma, table };
enum class NativeScale { sd, variance };

inline std::string to_string(VarianceFamily f) {
  switch (f) {
    case VarianceFamily::pc: return "PC";
    case VarianceFamily::tnormal: return "Tnormal";
    case VarianceFamily::hcauchy: return "Hcauchy";
    case VarianceFamily::unif: return "Unif";
    case VarianceFamily::invgamma: return "Invgamma";
    case VarianceFamily::table: return "Table";
  }
  return "?";
}

/// Rate of the exponential prior on the standard deviation with P(sd > u) = a.
inline double calibrate_pc_variance(double u, double a) {
  if (!(u > 0) || !std::isfinite(u)) throw ValidationError("PC variance prior: u must be > 0");
  if (!(a > 0 && a < 1)) throw ValidationError("PC variance prior: a must lie in (0,1)");
  return -std::log(a) / u;
}

class VariancePrior {
 public:
  /// Exponential prior on the standard deviation, calibrated by P(sd > u) = a.
  static VariancePrior pc(double u, double a) {
    VariancePrior p(VarianceFamily::pc, {u, a});
    p.rate_ = calibrate_pc_variance(u, a);
    return p;
  }
  /// Normal(mean, variance) on the standard deviation truncated to [0, inf).
  static VariancePrior tnormal(double mean, double variance) {
    if (!(variance > 0)) throw ValidationError("Tnormal prior: variance must be > 0");
    VariancePrior p(VarianceFamily::tnormal, {mean, variance});
    p.log_norm_ = std::log(normal_cdf(mean / std::sqrt(variance)));
    return p;
  }
  static VariancePrior hcauchy(double scale) {
    if (!(scale > 0)) throw ValidationError("Hcauchy prior: scale must be > 0");
    return VariancePrior(VarianceFamily::hcauchy, {scale});
  }
  /// Uniform on the standard deviation.
  static VariancePrior unif(double lower, double upper) {
    if (!(lower >= 0 && upper > lower)) throw ValidationError("Unif prior: need 0 <= lower < upper");
    return VariancePrior(VarianceFamily::unif, {lower, upper});
  }
  /// Inverse gamma(shape, rate) on the variance.
  static VariancePrior invgamma(double shape, double rate) {
    if (!(shape > 0 && rate > 0)) throw ValidationError("Invgamma prior: shape and rate must be > 0");
    return VariancePrior(VarianceFamily::invgamma, {shape, rate});
  }
  /// User density on the variance scale, linearly interpolated. A single
  /// support point fixes the variance at that value.
  static VariancePrior table(std::vector<std::pair<double, double>> pts) {
    VariancePrior p(VarianceFamily::table, {});
    p.table_ = detail::DensityTable::make(std::move(pts), 0.0, kInf, "variance");
    if (p.table_.point_mass() && !(p.table_.x[0] > 0))
      throw ValidationError("variance table prior: a fixed variance must be > 0");
    return p;
  }

  VarianceFamily family() const { return family_; }
  const std::vector<double>& params() const { return params_; }
  const detail::DensityTable& table_points() const { return table_; }
  double rate() const { return rate_; }

  NativeScale scale() const {
    return (family_ == VarianceFamily::invgamma || family_ == VarianceFamily::table) ? NativeScale::variance
                                                                                      : NativeScale::sd;
  }

  bool is_point_mass() const { return family_ == VarianceFamily::table && table_.point_mass(); }
  /// Fixed log precision for point-mass priors.
  double point_mass_theta() const { return -std::log(table_.x[0]); }

  /// Log density at v on the native scale (standard deviation or variance).
  double native_logdensity(double v) const {
    if (!(v >= 0)) return kNegInf;
    switch (family_) {
      case VarianceFamily::pc: return std::log(rate_) - rate_ * v;
      case VarianceFamily::tnormal:
        return normal_logpdf(v, params_[0], params_[1]) - log_norm_;
      case VarianceFamily::hcauchy: {
        const double s = params_[0];
        return std::log(2.0 / (std::numbers::pi * s)) - std::log1p((v / s) * (v / s));
      }
      case VarianceFamily::unif:
        return (v >= params_[0] && v <= params_[1]) ? -std::log(params_[1] - params_[0]) : kNegInf;
      case VarianceFamily::invgamma: {
        if (v <= 0) return kNegInf;
        const double a = params_[0], b = params_[1];
        return a * std::log(b) - std::lgamma(a) - (a + 1) * std::log(v) - b / v;
      }
      case VarianceFamily::table: {
        const double d = table_.density(v);
        return d > 0 ? std::log(d) : kNegInf;
      }
    }
    return kNegInf;
  }

  /// Log density of theta = log(1/variance), including the Jacobian.
  double log_density_theta(double theta) const {
    if (scale() == NativeScale::sd) {
      const double sd = std::exp(-0.5 * theta);
      return native_logdensity(sd) + std::log(0.5) - 0.5 * theta;
    }
    return native_logdensity(std::exp(-theta)) - theta;
  }

  /// Native-scale support, used for previews.
  std::pair<double, double> native_range() const {
    switch (family_) {
      case VarianceFamily::pc: return {0.0, -std::log(1e-4) / rate_};
      case VarianceFamily::tnormal: return {0.0, std::max(0.0, params_[0]) + 5 * std::sqrt(params_[1])};
      case VarianceFamily::hcauchy: return {0.0, 20 * params_[0]};
      case VarianceFamily::unif: return {params_[0], params_[1]};
      case VarianceFamily::invgamma: {
        const double mode = params_[1] / (params_[0] + 1);
        return {0.0, std::max(10 * mode, 1.0)};
      }
      case VarianceFamily::table: return {table_.x.front(), table_.x.back()};
    }
    return {0.0, 1.0};
  }

 private:
  VariancePrior(VarianceFamily f, std::vector<double> params) : family_(f), params_(std::move(params)) {}

  VarianceFamily family_;
  std::vector<double> params_;
  double rate_ = 0;
  double log_norm_ = 0;
  detail::DensityTable table_;
};

// ---------------------------------------------------------------------------
// correlation priors

/// Distance sqrt(2 KLD) between zero-mean unit-variance bivariate Gaussians
/// with correlations rho and rho0.
inline double pc_correlation_distance(double rho, double rho0) {
  if (rho <= -1 || rho >= 1) return kInf;
  const double kld = (1 - rho * rho0) / (1 - rho0 * rho0) - 1 +
                     0.5 * (std::log1p(-rho0 * rho0) - std::log1p(-rho * rho));
  return std::sqrt(std::max(0.0, 2 * kld));
}

/// |d distance / d rho|.
inline double pc_correlation_distance_derivative(double rho, double rho0) {
  const double r02 = 1 - rho0 * rho0;
  if (std::abs(rho - rho0) < 1e-6) return std::sqrt((1 + rho0 * rho0) / (r02 * r02));
  const double dk = -rho0 / r02 + rho / (1 - rho * rho);
  const double d = pc_correlation_distance(rho, rho0);
  return std::abs(dk) / d;
}

/// Parameters of a PC correlation prior as given by the user.
struct PcCorrelationSpec {
  int strategy = 1;
  double rho0 = 0;
  std::optional<double> omega, u1, a1, u2, a2;
};

/// PC prior for the correlation around a base value rho0: on each side of
/// rho0 an exponential density on the distance, with left mass omega. Both
/// sides share the same density at rho0.
struct CalibratedCorPrior {
  double rho0 = 0;
  double omega = 0.5;
  double lambda_left = 1;
  double lambda_right = 1;
  double trunc_left = 1;   // 1 - exp(-lambda_left * d(-1))
  double trunc_right = 1;  // 1 - exp(-lambda_right * d(+1))

  double log_density(double rho) const {
    if (rho <= -1 || rho >= 1) return kNegInf;
    const double d = pc_correlation_distance(rho, rho0);
    const double dd = pc_correlation_distance_derivative(rho, rho0);
    if (rho < rho0)
      return std::log(omega * lambda_left) - lambda_left * d + std::log(dd) - std::log(trunc_left);
    return std::log((1 - omega) * lambda_right) - lambda_right * d + std::log(dd) - std::log(trunc_right);
  }

  double cdf(double rho) const {
    if (rho <= -1) return 0;
    if (rho >= 1) return 1;
    const double d = pc_correlation_distance(rho, rho0);
    if (rho < rho0) {
      const double dm = pc_correlation_distance(-1, rho0);
      return omega * (std::exp(-lambda_left * d) - std::exp(-lambda_left * dm)) / trunc_left;
    }
    const double dm = pc_correlation_distance(1, rho0);
    return 1 - (1 - omega) * (std::exp(-lambda_right * d) - std::exp(-lambda_right * dm)) / trunc_right;
  }
};

namespace detail {

/// Solves for the rate giving `mass * P_tail = target`, where the tail beyond
/// distance d_u of a truncated exponential with truncation distance d_max is
/// (exp(-l d_u) - exp(-l d_max)) / (1 - exp(-l d_max)). Bisection on log rate.
inline double solve_pc_rate(double mass, double target, double d_u, double d_max) {
  auto tail = [&](double log_rate) {
    const double l = std::exp(log_rate);
    const double em = std::exp(-l * d_max);
    return mass * (std::exp(-l * d_u) - em) / (1 - em) - target;
  };
  const double lo = -20, hi = 20;
  if (tail(lo) < 0 || tail(hi) > 0)
    throw ValidationError("infeasible contrast: PC correlation tail probability outside the reachable range");
  double a = lo, b = hi;
  for (int it = 0; it < 300; ++it) {
    const double m = 0.5 * (a + b);
    const double f = tail(m);
    if (std::abs(f) < 1e-10 && b - a < 1e-12) return std::exp(m);
    (f > 0 ? a : b) = m;
    if (b - a < 1e-14) break;
  }
  const double r = 0.5 * (a + b);
  if (std::abs(tail(r)) > 1e-10) throw NumericError("PC correlation prior: rate root find did not converge");
  return std::exp(r);
}

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw ValidationError(msg);
}

}  // namespace detail

inline CalibratedCorPrior calibrate_pc_correlation(const PcCorrelationSpec& s) {
  using detail::require;
  require(s.strategy >= 1 && s.strategy <= 3, "PC correlation prior: strategy must be 1, 2 or 3");
  require(s.rho0 > -1 && s.rho0 < 1, "PC correlation prior: rho0 must lie in (-1,1)");
  const double dmin = pc_correlation_distance(-1, s.rho0), dmax = pc_correlation_distance(1, s.rho0);
  CalibratedCorPrior c;
  c.rho0 = s.rho0;

  auto check_left = [&] {
    require(s.u1 && s.a1, "PC correlation prior: strategy needs u1 and a1");
    require(*s.u1 > -1 && *s.u1 < s.rho0, "PC correlation prior: u1 must lie in (-1, rho0)");
    require(*s.a1 > 0 && *s.a1 < 1, "PC correlation prior: a1 must lie in (0,1)");
  };
  auto check_right = [&] {
    require(s.u2 && s.a2, "PC correlation prior: strategy needs u2 and a2");
    require(*s.u2 > s.rho0 && *s.u2 < 1, "PC correlation prior: u2 must lie in (rho0, 1)");
    require(*s.a2 > 0 && *s.a2 < 1, "PC correlation prior: a2 must lie in (0,1)");
  };
  auto check_omega = [&] {
    require(s.omega.has_value(), "PC correlation prior: strategy needs omega");
    require(*s.omega > 0 && *s.omega < 1, "PC correlation prior: omega must lie in (0,1)");
  };

  switch (s.strategy) {
    case 1: {
      check_omega();
      check_left();
      require(*s.a1 < *s.omega, "infeasible contrast: a1 must be smaller than omega = P(rho < rho0)");
      c.omega = *s.omega;
      c.lambda_left = detail::solve_pc_rate(c.omega, *s.a1, pc_correlation_distance(*s.u1, s.rho0), dmin);
      c.lambda_right = c.omega * c.lambda_left / (1 - c.omega);
      break;
    }
    case 2: {
      check_omega();
      check_right();
      require(*s.a2 < 1 - *s.omega, "infeasible contrast: a2 must be smaller than 1 - omega = P(rho > rho0)");
      c.omega = *s.omega;
      c.lambda_right =
          detail::solve_pc_rate(1 - c.omega, *s.a2, pc_correlation_distance(*s.u2, s.rho0), dmax);
      c.lambda_left = (1 - c.omega) * c.lambda_right / c.omega;
      break;
    }
    case 3: {
      check_left();
      check_right();
      require(*s.a1 + *s.a2 < 1, "infeasible contrast: a1 + a2 must be smaller than 1");
      const double d1 = pc_correlation_distance(*s.u1, s.rho0), d2 = pc_correlation_distance(*s.u2, s.rho0);
      auto rates = [&](double omega) {
        return std::pair{detail::solve_pc_rate(omega, *s.a1, d1, dmin),
                         detail::solve_pc_rate(1 - omega, *s.a2, d2, dmax)};
      };
      // omega balances the densities at rho0; the balance is monotone in omega
      const double eps = 1e-9;
      const double omega = bisect(
          [&](double w) {
            const auto [ll, lr] = rates(w);
            return std::log(w * ll) - std::log((1 - w) * lr);
          },
          *s.a1 + eps, 1 - *s.a2 - eps, 1e-14);
      c.omega = omega;
      std::tie(c.lambda_left, c.lambda_right) = rates(omega);
      break;
    }
  }
  c.trunc_left = 1 - std::exp(-c.lambda_left * dmin);
  c.trunc_right = 1 - std::exp(-c.lambda_right * dmax);
  return c;
}

enum class CorrelationFamily { pc, normal, beta, table };

inline std::string to_string(CorrelationFamily f) {
  switch (f) {
    case CorrelationFamily::pc: return "PC";
    case CorrelationFamily::normal: return "Normal";
    case CorrelationFamily::beta: return "Beta";
    case CorrelationFamily::table: return "Table";
  }
  return "?";
}

class CorrelationPrior {
 public:
  static CorrelationPrior pc(const PcCorrelationSpec& s) {
    CorrelationPrior p(CorrelationFamily::pc);
    p.pc_spec_ = s;
    p.pc_ = calibrate_pc_correlation(s);
    return p;
  }
  /// Normal(mean, variance) on log((1+rho)/(1-rho)) = 2 * fisher_z(rho).
  static CorrelationPrior normal(double mean, double variance) {
    if (!(variance > 0)) throw ValidationError("Normal correlation prior: variance must be > 0");
    CorrelationPrior p(CorrelationFamily::normal);
    p.params_ = {mean, variance};
    return p;
  }
  /// Beta(a, b) on (rho + 1) / 2.
  static CorrelationPrior beta(double a, double b) {
    if (!(a > 0 && b > 0)) throw ValidationError("Beta correlation prior: shapes must be > 0");
    CorrelationPrior p(CorrelationFamily::beta);
    p.params_ = {a, b};
    return p;
  }
  /// User density on rho in [-1, 1]; a single point fixes rho.
  static CorrelationPrior table(std::vector<std::pair<double, double>> pts) {
    CorrelationPrior p(CorrelationFamily::table);
    p.table_ = detail::DensityTable::make(std::move(pts), -1.0, 1.0, "correlation");
    if (p.table_.point_mass() && std::abs(p.table_.x[0]) >= 1)
      throw ValidationError("correlation table prior: a fixed correlation must lie in (-1,1)");
    return p;
  }

  CorrelationFamily family() const { return family_; }
  const std::vector<double>& params() const { return params_; }
  const std::optional<CalibratedCorPrior>& calibrated() const { return pc_; }
  const std::optional<PcCorrelationSpec>& pc_spec() const { return pc_spec_; }
  const detail::DensityTable& table_points() const { return table_; }

  bool is_point_mass() const { return family_ == CorrelationFamily::table && table_.point_mass(); }
  double point_mass_theta() const { return std::atanh(table_.x[0]); }

  /// Log density on the correlation scale.
  double native_logdensity(double rho) const {
    if (!(rho > -1 && rho < 1)) {
      if (family_ == CorrelationFamily::table && (rho == -1 || rho == 1) && !table_.point_mass()) {
        const double d = table_.density(rho);
        return d > 0 ? std::log(d) : kNegInf;
      }
      return kNegInf;
    }
    switch (family_) {
      case CorrelationFamily::pc: return pc_->log_density(rho);
      case CorrelationFamily::normal: {
        const double w = std::log1p(rho) - std::log1p(-rho);
        // dw/drho = 2 / (1 - rho^2)
        return normal_logpdf(w, params_[0], params_[1]) + std::log(2.0) - std::log1p(-rho * rho);
      }
      case CorrelationFamily::beta: {
        const double a = params_[0], b = params_[1];
        const double x = 0.5 * (rho + 1);
        return std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + (a - 1) * std::log(x) +
               (b - 1) * std::log1p(-x) - std::log(2.0);
      }
      case CorrelationFamily::table: {
        const double d = table_.density(rho);
        return d > 0 ? std::log(d) : kNegInf;
      }
    }
    return kNegInf;
  }

  /// Log density of the internal z = atanh(rho), including drho/dz = 1 - rho^2.
  double log_density_z(double z) const {
    if (family_ == CorrelationFamily::normal)
      return normal_logpdf(2 * z, params_[0], params_[1]) + std::log(2.0);
    const double rho = std::tanh(z);
    if (!(rho > -1 && rho < 1)) return kNegInf;
    return native_logdensity(rho) + detail::log_one_minus_tanh2(z);
  }

 private:
  explicit CorrelationPrior(CorrelationFamily f) : family_(f) {}

  CorrelationFamily family_;
  std::vector<double> params_;
  std::optional<PcCorrelationSpec> pc_spec_;
  std::optional<CalibratedCorPrior> pc_;
  detail::DensityTable table_;
};

// ---------------------------------------------------------------------------
// inverse Wishart on the whole 2x2 covariance

/// Builds the random-effect covariance from (log prec phi, log prec psi, z).
inline Eigen::Matrix2d covariance_from_theta(const Eigen::Vector3d& theta) {
  const double s1 = std::exp(-0.5 * theta[0]), s2 = std::exp(-0.5 * theta[1]);
  const double r = std::tanh(theta[2]);
  Eigen::Matrix2d S;
  S << s1 * s1, r * s1 * s2, r * s1 * s2, s2 * s2;
  return S;
}

struct WishartPrior {
  double nu = 4;
  Eigen::Matrix2d scale = Eigen::Matrix2d::Identity();

  WishartPrior() = default;
  WishartPrior(double nu_, const Eigen::Matrix2d& R) : nu(nu_), scale(R) {
    if (!(nu > 1)) throw ValidationError("inverse Wishart prior: degrees of freedom must be > 1");
    if (std::abs(R(0, 1) - R(1, 0)) > 1e-12) throw ValidationError("inverse Wishart prior: scale must be symmetric");
    if (!(R(0, 0) > 0 && R.determinant() > 0))
      throw ValidationError("inverse Wishart prior: scale must be positive definite");
  }

  /// Inverse-Wishart log density of a 2x2 covariance.
  double log_density(const Eigen::Matrix2d& sigma) const {
    const double det = sigma.determinant();
    if (!(sigma(0, 0) > 0 && det > 0)) throw ValidationError("inverse Wishart: covariance not positive definite");
    constexpr double p = 2;
    const double log_mvgamma = 0.5 * std::log(std::numbers::pi) + std::lgamma(nu / 2) + std::lgamma(nu / 2 - 0.5);
    return 0.5 * nu * std::log(scale.determinant()) - 0.5 * nu * p * std::log(2.0) - log_mvgamma -
           0.5 * (nu + p + 1) * std::log(det) - 0.5 * (scale * sigma.inverse()).trace();
  }

  /// Log density on the internal scale: adds log |d(S11, S22, S12) / d theta|
  /// = log(S11 * S22 * sqrt(S11 * S22) * (1 - rho^2)).
  double log_density_theta(const Eigen::Vector3d& theta) const {
    const Eigen::Matrix2d S = covariance_from_theta(theta);
    if (std::abs(std::tanh(theta[2])) >= 1) throw ValidationError("inverse Wishart: correlation must lie in (-1,1)");
    const double log_jac = -1.5 * (theta[0] + theta[1]) + detail::log_one_minus_tanh2(theta[2]);
    return log_density(S) + log_jac;
  }
};

// ---------------------------------------------------------------------------
// combined configuration

struct PriorConfig {
  VariancePrior var1 = VariancePrior::invgamma(0.25, 0.025);
  VariancePrior var2 = VariancePrior::invgamma(0.25, 0.025);
  CorrelationPrior cor = CorrelationPrior::normal(0, 5);
  std::optional<WishartPrior> wishart;

  /// Components of theta fixed by point-mass priors.
  std::array<std::optional<double>, 3> fixed_components() const {
    std::array<std::optional<double>, 3> f;
    if (wishart) return f;
    if (var1.is_point_mass()) f[0] = var1.point_mass_theta();
    if (var2.is_point_mass()) f[1] = var2.point_mass_theta();
    if (cor.is_point_mass()) f[2] = cor.point_mass_theta();
    return f;
  }

  /// Joint log prior density of theta (point-mass components contribute 0).
  double log_density(const Eigen::Vector3d& theta) const {
    if (wishart) return wishart->log_density_theta(theta);
    double s = 0;
    if (!var1.is_point_mass()) s += var1.log_density_theta(theta[0]);
    if (!var2.is_point_mass()) s += var2.log_density_theta(theta[1]);
    if (!cor.is_point_mass()) s += cor.log_density_z(theta[2]);
    return s;
  }
};

// ---------------------------------------------------------------------------
// construction from family names and parameter vectors

using ParamVector = std::vector<std::optional<double>>;

namespace detail {

inline double need(const ParamVector& p, std::size_t i, const std::string& what) {
  if (i >= p.size() || !p[i]) throw ValidationError(what + ": missing parameter " + std::to_string(i + 1));
  return *p[i];
}

inline std::vector<std::pair<double, double>> pairs(const ParamVector& p, const std::string& what) {
  if (p.empty() || p.size() % 2) throw ValidationError(what + " table prior: parameters must be (point, density) pairs");
  std::vector<std::pair<double, double>> out;
  for (std::size_t i = 0; i < p.size(); i += 2) out.emplace_back(need(p, i, what), need(p, i + 1, what));
  return out;
}

}  // namespace detail

inline bool is_invwishart(const std::string& family) { return lower(family) == "invwishart"; }

/// Family names are case-insensitive.
inline VariancePrior make_variance_prior(const std::string& family, const ParamVector& par) {
  const auto f = lower(family);
  const std::string w = "variance prior " + family;
  if (f == "pc") return VariancePrior::pc(detail::need(par, 0, w), detail::need(par, 1, w));
  if (f == "tnormal") return VariancePrior::tnormal(detail::need(par, 0, w), detail::need(par, 1, w));
  if (f == "hcauchy") return VariancePrior::hcauchy(detail::need(par, 0, w));
  if (f == "unif") return VariancePrior::unif(detail::need(par, 0, w), detail::need(par, 1, w));
  if (f == "invgamma") return VariancePrior::invgamma(detail::need(par, 0, w), detail::need(par, 1, w));
  if (f == "table") return VariancePrior::table(detail::pairs(par, "variance"));
  throw ValidationError("unknown variance prior '" + family + "'");
}

/// PC parameters follow the 7-slot layout (strategy, rho0, omega, u1, a1, u2, a2).
inline CorrelationPrior make_correlation_prior(const std::string& family, const ParamVector& par) {
  const auto f = lower(family);
  const std::string w = "correlation prior " + family;
  if (f == "pc") {
    if (par.size() != 7) throw ValidationError("PC correlation prior needs 7 parameters: strategy, rho0, omega, u1, a1, u2, a2");
    PcCorrelationSpec s;
    const double strat = detail::need(par, 0, w);
    if (strat != 1 && strat != 2 && strat != 3) throw ValidationError("PC correlation prior: strategy must be 1, 2 or 3");
    s.strategy = static_cast<int>(strat);
    s.rho0 = detail::need(par, 1, w);
    if (s.strategy != 3) s.omega = par[2];
    if (s.strategy != 2) {
      s.u1 = par[3];
      s.a1 = par[4];
    }
    if (s.strategy != 1) {
      s.u2 = par[5];
      s.a2 = par[6];
    }
    return CorrelationPrior::pc(s);
  }
  if (f == "normal") return CorrelationPrior::normal(detail::need(par, 0, w), detail::need(par, 1, w));
  if (f == "beta") return CorrelationPrior::beta(detail::need(par, 0, w), detail::need(par, 1, w));
  if (f == "table") return CorrelationPrior::table(detail::pairs(par, "correlation"));
  throw ValidationError("unknown correlation prior '" + family + "'");
}

/// (nu, R11, R22, R12).
inline WishartPrior make_wishart_prior(const ParamVector& par) {
  const std::string w = "inverse Wishart prior";
  if (par.size() != 4) throw ValidationError("inverse Wishart prior needs 4 parameters: nu, R11, R22, R12");
  Eigen::Matrix2d R;
  R << detail::need(par, 1, w), detail::need(par, 3, w), detail::need(par, 3, w), detail::need(par, 2, w);
  return WishartPrior(detail::need(par, 0, w), R);
}

// ---------------------------------------------------------------------------
// density tables for previews

struct PriorTable {
  std::vector<double> x, density;
};

namespace detail {
template <class LogDens>
PriorTable tabulate(const std::vector<double>& grid, LogDens&& logd) {
  if (grid.empty()) throw ValidationError("tabulate_prior: empty grid");
  PriorTable t{grid, std::vector<double>(grid.size())};
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double l = logd(grid[i]);
    t.density[i] = std::isfinite(l) ? std::exp(l) : 0.0;
  }
  if (grid.size() > 1) {
    const double mass = trapezoid(t.x, t.density);
    if (mass > 0 && std::isfinite(mass))
      for (auto& d : t.density) d /= mass;
  }
  return t;
}
}  // namespace detail

/// Density on the native scale over `grid`, renormalised to unit trapezoid mass.
inline PriorTable tabulate_prior(const VariancePrior& p, const std::vector<double>& grid) {
  return detail::tabulate(grid, [&](double v) { return p.native_logdensity(v); });
}

inline PriorTable tabulate_prior(const CorrelationPrior& p, const std::vector<double>& grid) {
  return detail::tabulate(grid, [&](double r) { return p.native_logdensity(r); });
}

// ---------------------------------------------------------------------------
// user-level configuration: family names plus parameter vectors

struct PriorSpec {
  std::string var_prior = "Invgamma";
  ParamVector var_par{0.25, 0.025};
  std::optional<std::string> var2_prior;  // defaults to var_prior / var_par
  ParamVector var2_par;
  std::string cor_prior = "Normal";
  ParamVector cor_par{0.0, 5.0};
  ParamVector wishart_par{4.0, 1.0, 1.0, 0.0};

  bool uses_wishart() const {
    return is_invwishart(var_prior) || (var2_prior && is_invwishart(*var2_prior)) || is_invwishart(cor_prior);
  }

  /// An inverse Wishart family anywhere replaces all other prior choices.
  PriorConfig build() const {
    PriorConfig c;
    if (uses_wishart()) {
      c.wishart = make_wishart_prior(wishart_par);
      return c;
    }
    c.var1 = make_variance_prior(var_prior, var_par);
    const std::string f2 = var2_prior.value_or(var_prior);
    c.var2 = make_variance_prior(f2, var2_par.empty() && lower(f2) == lower(var_prior) ? var_par : var2_par);
    c.cor = make_correlation_prior(cor_prior, cor_par);
    return c;
  }
};

}  // namespace diagmeta
