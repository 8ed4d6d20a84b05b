#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <string_view>

#include "diagmeta/numeric.hpp"

namespace diagmeta {

enum class Link { logit, probit, cloglog };

inline Link parse_link(std::string_view name) {
  const auto s = lower(std::string(name));
  if (s == "logit") return Link::logit;
  if (s == "probit") return Link::probit;
  if (s == "cloglog") return Link::cloglog;
  throw ValidationError("unknown link '" + std::string(name) + "' (expected logit, probit or cloglog)");
}

inline std::string to_string(Link l) {
  switch (l) {
    case Link::logit: return "logit";
    case Link::probit: return "probit";
    case Link::cloglog: return "cloglog";
  }
  return "logit";
}

namespace detail {

inline constexpr double kInvSqrtTwoPi = 0.39894228040143267794;

/// log Phi(x), accurate in the far lower tail.
inline double log_normal_cdf(double x) {
  if (x > -30) return std::log(normal_cdf(x));
  const double x2 = x * x;
  return -0.5 * x2 - std::log(-x) - 0.5 * kLogTwoPi + std::log1p(-1 / x2 + 3 / (x2 * x2));
}

/// phi(x) / Phi(x).
inline double mills_ratio(double x) {
  if (x > -30) return kInvSqrtTwoPi * std::exp(-0.5 * x * x) / normal_cdf(x);
  const double x2 = x * x;
  return -x / (1 - 1 / x2 + 3 / (x2 * x2) - 15 / (x2 * x2 * x2));
}

}  // namespace detail

/// Probability from a linear predictor.
inline double inverse_link(Link l, double eta) {
  switch (l) {
    case Link::logit: return inv_logit(eta);
    case Link::probit: return normal_cdf(eta);
    case Link::cloglog: return -std::expm1(-std::exp(eta));
  }
  return 0;
}

inline double apply_link(Link l, double p) {
  switch (l) {
    case Link::logit: return logit(p);
    case Link::probit: {
      if (p > 0.5) return -apply_link(l, 1 - p);
      // safeguarded Newton on Phi(x) = p in the lower half
      double lo = -40, hi = 0, x = logit(p) / 1.702;
      for (int i = 0; i < 200; ++i) {
        const double f = normal_cdf(x) - p;
        if (f > 0) hi = x;
        else lo = x;
        const double d = detail::kInvSqrtTwoPi * std::exp(-0.5 * x * x);
        double next = d > 0 ? x - f / d : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        const bool done = std::abs(next - x) < 1e-15 * (1 + std::abs(x));
        x = next;
        if (done || hi - lo < 1e-15) break;
      }
      return x;
    }
    case Link::cloglog: return std::log(-std::log1p(-p));
  }
  return 0;
}

/// Binomial log-likelihood of y successes out of n at linear predictor eta,
/// without the binomial coefficient, and its first two derivatives in eta.
struct LogLikTerms {
  double value;
  double grad;
  double hess;
};

inline LogLikTerms binomial_terms(Link l, double y, double n, double eta) {
  const double f = n - y;
  switch (l) {
    case Link::logit: {
      const double p = inv_logit(eta);
      return {y * eta - n * log1p_exp(eta), y - n * p, -n * p * (1 - p)};
    }
    case Link::probit: {
      const double rp = detail::mills_ratio(eta), rm = detail::mills_ratio(-eta);
      double v = 0;
      if (y > 0) v += y * detail::log_normal_cdf(eta);
      if (f > 0) v += f * detail::log_normal_cdf(-eta);
      return {v, y * rp - f * rm, -y * rp * (eta + rp) - f * rm * (-eta + rm)};
    }
    case Link::cloglog: {
      const double t = std::exp(eta);
      // log p = log(1 - exp(-t)), log(1 - p) = -t
      double logp, h, dh;
      if (t > 50) {
        logp = std::log1p(-std::exp(-t));
        h = t * std::exp(-t);
        dh = t * (1 - t) * std::exp(-t);
      } else if (t < 1e-5) {
        logp = std::log(t) - t / 2 + t * t / 24;
        h = 1 - t / 2 + t * t / 12;
        dh = t * (-0.5 + t / 6);
      } else {
        const double em1 = std::expm1(t);
        logp = std::log(-std::expm1(-t));
        h = t / em1;
        dh = t * (em1 - t * std::exp(t)) / (em1 * em1);
      }
      double v = -f * t;
      if (y > 0) v += y * logp;
      return {v, y * h - f * t, y * dh - f * t};
    }
  }
  return {0, 0, 0};
}

inline double log_binomial_coefficient(double n, double k) {
  return std::lgamma(n + 1) - std::lgamma(k + 1) - std::lgamma(n - k + 1);
}

}  // namespace diagmeta
