#pragma once

// Bivariate binomial-normal model: latent field, Laplace approximation of the
// hyperparameter posterior, grid integration, marginals and iid sampling.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "diagmeta/data.hpp"
#include "diagmeta/grid.hpp"
#include "diagmeta/latent.hpp"
#include "diagmeta/marginal.hpp"
#include "diagmeta/priors.hpp"

namespace diagmeta {

enum class LatentStrategy { gaussian, laplace };

struct FitOptions {
  GridOptions grid;
  double fixed_prior_variance = 1000;
  LatentStrategy strategy = LatentStrategy::gaussian;
  bool second_order_evidence = true;  // add the next Laplace term to log p(y | theta)
  int threads = 1;
  bool record_timings = false;
};

/// The model for one design and prior configuration.
class MetaModel {
 public:
  MetaModel(DesignBundle design, PriorConfig priors, double fixed_prior_variance = 1000, bool second_order = true)
      : design_(std::move(design)), priors_(std::move(priors)), fixed_var_(fixed_prior_variance), second_order_(second_order) {
    if (!(fixed_var_ > 0)) throw ValidationError("fixed-effect prior variance must be > 0");
    latent_.link = design_.link;
    latent_.y = design_.successes;
    latent_.n = design_.trials;
    latent_.A = design_.full_design();
  }

  const DesignBundle& design() const { return design_; }
  const PriorConfig& priors() const { return priors_; }
  const LatentModel& latent() const { return latent_; }
  double fixed_prior_variance() const { return fixed_var_; }

  /// Prior precision of the latent field.
  Eigen::MatrixXd precision(const Eigen::Vector3d& theta) const {
    const int p = design_.n_fixed(), I = design_.n_studies();
    Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(p + 2 * I, p + 2 * I);
    for (int j = 0; j < p; ++j) Q(j, j) = 1.0 / fixed_var_;
    const double r = std::tanh(theta[2]);
    const double omr2 = std::exp(detail::log_one_minus_tanh2(theta[2]));
    const double t1 = std::exp(theta[0]), t2 = std::exp(theta[1]);
    const double off = -r * std::exp(0.5 * (theta[0] + theta[1])) / omr2;
    for (int i = 0; i < I; ++i) {
      const int a = p + 2 * i;
      Q(a, a) = t1 / omr2;
      Q(a + 1, a + 1) = t2 / omr2;
      Q(a, a + 1) = Q(a + 1, a) = off;
    }
    return Q;
  }

  double log_det_precision(const Eigen::Vector3d& theta) const {
    const int p = design_.n_fixed(), I = design_.n_studies();
    return -p * std::log(fixed_var_) + I * (theta[0] + theta[1] - detail::log_one_minus_tanh2(theta[2]));
  }

  LaplaceEvaluation laplace(const Eigen::Vector3d& theta) const {
    return laplace_evidence(latent_, precision(theta), log_det_precision(theta), second_order_);
  }

  /// Unnormalised log posterior of theta (Laplace approximation + prior).
  double log_posterior_theta(const Eigen::Vector3d& theta) const {
    const double lp = priors_.log_density(theta);
    if (!std::isfinite(lp)) return kNegInf;
    return laplace(theta).log_evidence + lp;
  }

 private:
  DesignBundle design_;
  PriorConfig priors_;
  double fixed_var_;
  bool second_order_;
  LatentModel latent_;
};

struct PosteriorSamples {
  Eigen::MatrixXd latent;  // nsample x latent_dim
  Eigen::MatrixXd theta;   // nsample x 3
  std::vector<int> grid_index;
  std::uint64_t seed = 0;

  int size() const { return static_cast<int>(latent.rows()); }
};

struct LevelCorrelation {
  std::string level;  // empty without modality
  double value = 0;
};

struct Timings {
  double pre = 0, run = 0, post = 0;
  double total() const { return pre + run + post; }
};

struct FitResult {
  Dataset data;
  ModelSpec spec;
  PriorConfig priors;
  FitOptions options;
  DesignBundle design;
  HyperGrid grid;
  std::vector<GaussianApprox> approx;     // aligned with grid.points
  std::vector<Eigen::MatrixXd> covariance;  // inverse precision per grid point
  std::vector<Marginal> fixed;            // one per fixed effect
  std::vector<Marginal> hyper;            // var1, var2, rho
  std::vector<LevelCorrelation> mu_nu_correlation;
  double mlik = 0;
  std::optional<PosteriorSamples> samples;
  Timings timings;

  const Marginal& fixed_marginal(const std::string& name) const {
    for (auto& m : fixed)
      if (m.name() == name) return m;
    throw ValidationError("no fixed effect named " + name);
  }
  const Marginal& hyper_marginal(const std::string& name) const {
    for (auto& m : hyper)
      if (m.name() == name) return m;
    throw ValidationError("no hyperparameter named " + name);
  }

  /// Posterior mean of the random-effect covariance from the hyper marginals.
  Eigen::Matrix2d mean_covariance() const {
    const double v1 = hyper[0].mean(), v2 = hyper[1].mean(), r = hyper[2].mean();
    Eigen::Matrix2d S;
    S << v1, r * std::sqrt(v1 * v2), r * std::sqrt(v1 * v2), v2;
    return S;
  }

  /// Mixture mean and covariance of two latent coordinates.
  std::pair<Eigen::Vector2d, Eigen::Matrix2d> latent_moments(int i, int j) const {
    Eigen::Vector2d m = Eigen::Vector2d::Zero();
    Eigen::Matrix2d S = Eigen::Matrix2d::Zero();
    for (std::size_t k = 0; k < approx.size(); ++k) {
      const double w = grid.points[k].weight;
      const Eigen::Vector2d mk(approx[k].mode[i], approx[k].mode[j]);
      Eigen::Matrix2d Ck;
      Ck << covariance[k](i, i), covariance[k](i, j), covariance[k](j, i), covariance[k](j, j);
      m += w * mk;
      S += w * (Ck + mk * mk.transpose());
    }
    S -= m * m.transpose();
    return {m, S};
  }
};

// ---------------------------------------------------------------------------
// marginals

namespace detail {

/// Weighted kernel smoothing of one theta component, shrunk towards the mean
/// so the first two moments are kept, then mapped to the native scale.
inline Marginal hyper_marginal_from_grid(const HyperGrid& g, int comp, const std::string& name, double dz,
                                         std::size_t npoints = 512) {
  std::vector<double> t, w;
  for (auto& p : g.points) {
    t.push_back(p.theta[comp]);
    w.push_back(p.weight);
  }
  double m = 0, v = 0;
  for (std::size_t k = 0; k < t.size(); ++k) m += w[k] * t[k];
  for (std::size_t k = 0; k < t.size(); ++k) v += w[k] * (t[k] - m) * (t[k] - m);
  double sd = std::sqrt(v);
  if (!(sd > 0)) {
    // single grid point along this axis: use the Gaussian curvature
    sd = 1.0 / std::sqrt(std::max(1e-12, g.neg_hessian.size() ? g.neg_hessian.diagonal().maxCoeff() : 1.0));
  }
  const double c = std::min(0.9, 0.6 * dz);
  const double h = c * sd, a = std::sqrt(1 - c * c);
  std::vector<double> pos(t.size());
  double lo = kInf, hi = -kInf;
  for (std::size_t k = 0; k < t.size(); ++k) {
    pos[k] = v > 0 ? m + a * (t[k] - m) : t[k];
    lo = std::min(lo, pos[k] - 6 * h);
    hi = std::max(hi, pos[k] + 6 * h);
  }
  const double hk = v > 0 ? h : sd;
  if (v <= 0) {
    lo = m - 6 * sd;
    hi = m + 6 * sd;
  }
  const auto tg = linspace(lo, hi, npoints);
  std::vector<double> dt(npoints, 0.0);
  for (std::size_t k = 0; k < t.size(); ++k)
    for (std::size_t i = 0; i < npoints; ++i) dt[i] += w[k] * std::exp(normal_logpdf(tg[i], pos[k], hk * hk));

  std::vector<double> x(npoints), d(npoints);
  if (comp < 2) {
    // variance = exp(-theta); reverse so x increases
    for (std::size_t i = 0; i < npoints; ++i) {
      const std::size_t r = npoints - 1 - i;
      x[i] = std::exp(-tg[r]);
      d[i] = dt[r] / x[i];
    }
  } else {
    for (std::size_t i = 0; i < npoints; ++i) {
      x[i] = std::tanh(tg[i]);
      d[i] = dt[i] / std::exp(log_one_minus_tanh2(tg[i]));
    }
    // keep strictly increasing abscissae where tanh saturates
    std::vector<double> xs, ds;
    for (std::size_t i = 0; i < npoints; ++i)
      if (xs.empty() || x[i] > xs.back()) {
        xs.push_back(x[i]);
        ds.push_back(d[i]);
      }
    x = std::move(xs);
    d = std::move(ds);
  }
  return Marginal::from_density(name, std::move(x), std::move(d));
}

}  // namespace detail

inline const std::vector<std::string>& hyper_names() {
  static const std::vector<std::string> n{"var1", "var2", "rho"};
  return n;
}

/// Native-scale marginals of (variance 1, variance 2, correlation).
inline std::vector<Marginal> hyper_marginals(const HyperGrid& g, const std::array<std::optional<double>, 3>& fixed,
                                             double dz) {
  std::vector<Marginal> out;
  for (int c = 0; c < 3; ++c) {
    if (fixed[c]) {
      const double native = c < 2 ? std::exp(-*fixed[c]) : std::tanh(*fixed[c]);
      out.push_back(Marginal::spike(hyper_names()[c], native));
    } else {
      out.push_back(detail::hyper_marginal_from_grid(g, c, hyper_names()[c], dz));
    }
  }
  return out;
}

/// Weight mixture of the per-point Gaussian conditionals of latent coordinate j.
inline Marginal latent_marginal(const FitResult& f, int j, const std::string& name) {
  std::vector<double> w, m, s;
  for (std::size_t k = 0; k < f.approx.size(); ++k) {
    w.push_back(f.grid.points[k].weight);
    m.push_back(f.approx[k].mode[j]);
    s.push_back(std::sqrt(f.covariance[k](j, j)));
  }
  return gaussian_mixture_marginal(name, w, m, s);
}

/// Full-Laplace version: per grid point, the coordinate marginal from
/// re-optimised conditional modes, mixed with the grid weights.
inline Marginal latent_marginal_laplace(const FitResult& f, const MetaModel& model, int j, const std::string& name,
                                        int threads = 1) {
  const Marginal gm = latent_marginal(f, j, name);
  const auto& x = gm.x();
  std::vector<std::vector<double>> per(f.approx.size());
  parallel_for(f.approx.size(), threads, [&](std::size_t k) {
    if (f.grid.points[k].weight < 1e-10) return;
    const Eigen::Vector3d th = f.grid.points[k].theta;
    per[k] = laplace_coordinate_marginal(model.latent(), model.precision(th), f.approx[k], j, x);
  });
  std::vector<double> d(x.size(), 0.0);
  for (std::size_t k = 0; k < per.size(); ++k) {
    if (per[k].empty()) continue;
    for (std::size_t i = 0; i < x.size(); ++i) d[i] += f.grid.points[k].weight * std::exp(per[k][i]);
  }
  return Marginal::from_density(name, x, d);
}

/// Posterior correlation between mu and nu for each modality level.
inline std::vector<LevelCorrelation> mu_nu_correlations(const FitResult& f) {
  std::vector<LevelCorrelation> out;
  for (int l = 0; l < f.design.n_levels(); ++l) {
    const auto [m, S] = f.latent_moments(f.design.mu_index(l), f.design.nu_index(l));
    out.push_back({f.design.level_label(l), S(0, 1) / std::sqrt(S(0, 0) * S(1, 1))});
  }
  return out;
}

// ---------------------------------------------------------------------------
// sampling

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}
}  // namespace detail

/// iid draws from the grid mixture of Gaussian approximations. Draws are made
/// in blocks of 1000 with per-block seeds, so the result does not depend on
/// the number of threads.
inline PosteriorSamples sample_posterior(const FitResult& f, int nsample, std::uint64_t seed, int threads = 1) {
  if (nsample <= 0) throw ValidationError("nsample must be positive");
  const int dim = f.design.latent_dim();
  const std::size_t K = f.approx.size();
  std::vector<Eigen::MatrixXd> chol_upper(K);  // U with precision = U'U
  for (std::size_t k = 0; k < K; ++k) {
    Eigen::LLT<Eigen::MatrixXd> llt(f.approx[k].precision);
    if (llt.info() != Eigen::Success) throw NumericError("sampling: precision not positive definite");
    chol_upper[k] = llt.matrixU();
  }
  std::vector<double> cum(K);
  double acc = 0;
  for (std::size_t k = 0; k < K; ++k) cum[k] = (acc += f.grid.points[k].weight);

  PosteriorSamples s;
  s.seed = seed;
  s.latent.resize(nsample, dim);
  s.theta.resize(nsample, 3);
  s.grid_index.assign(nsample, 0);
  constexpr int kBlock = 1000;
  const std::size_t nblocks = static_cast<std::size_t>((nsample + kBlock - 1) / kBlock);
  parallel_for(nblocks, threads, [&](std::size_t b) {
    std::mt19937_64 rng(detail::splitmix64(seed ^ detail::splitmix64(b + 1)));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> norm(0.0, 1.0);
    const int begin = static_cast<int>(b) * kBlock, end = std::min(nsample, begin + kBlock);
    Eigen::VectorXd z(dim);
    for (int i = begin; i < end; ++i) {
      const double u = unif(rng) * acc;
      std::size_t k = static_cast<std::size_t>(std::upper_bound(cum.begin(), cum.end(), u) - cum.begin());
      if (k >= K) k = K - 1;
      for (int a = 0; a < dim; ++a) z[a] = norm(rng);
      // U x = z gives x ~ N(0, (U'U)^-1)
      const Eigen::VectorXd x = f.approx[k].mode + chol_upper[k].triangularView<Eigen::Upper>().solve(z);
      s.latent.row(i) = x.transpose();
      s.theta.row(i) = f.grid.points[k].theta.transpose();
      s.grid_index[i] = static_cast<int>(k);
    }
  });
  return s;
}

// ---------------------------------------------------------------------------
// fit

namespace detail {

inline FitResult fit_in_order(const Dataset& data, const ModelSpec& spec, const PriorConfig& priors,
                              const FitOptions& options) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  FitResult r;
  r.data = data;
  r.spec = spec;
  r.priors = priors;
  r.options = options;
  r.design = build_design(data, spec);
  const MetaModel model(r.design, priors, options.fixed_prior_variance, options.second_order_evidence);
  const auto fixed = priors.fixed_components();
  const auto t1 = clock::now();

  GridOptions go = options.grid;
  go.threads = options.threads;
  std::vector<std::optional<double>> fixed_v(fixed.begin(), fixed.end());
  r.grid = explore_hyper_grid([&](const Eigen::VectorXd& th) { return model.log_posterior_theta(th); }, fixed_v,
                              Eigen::VectorXd::Zero(3), go);
  const std::size_t K = r.grid.points.size();
  r.approx.resize(K);
  r.covariance.resize(K);
  parallel_for(K, options.threads, [&](std::size_t k) {
    r.approx[k] = model.laplace(r.grid.points[k].theta).approx;
    r.covariance[k] = r.approx[k].covariance();
  });
  r.mlik = r.grid.log_marginal_likelihood;
  const auto t2 = clock::now();

  for (int j = 0; j < r.design.n_fixed(); ++j) {
    const auto& name = r.design.fixed_effect_names[j];
    r.fixed.push_back(options.strategy == LatentStrategy::laplace
                          ? latent_marginal_laplace(r, model, j, name, options.threads)
                          : latent_marginal(r, j, name));
  }
  r.hyper = hyper_marginals(r.grid, fixed, go.dz);
  r.mu_nu_correlation = mu_nu_correlations(r);
  if (spec.nsample > 0) r.samples = sample_posterior(r, spec.nsample, spec.seed, options.threads);
  const auto t3 = clock::now();

  auto secs = [](auto a, auto b) { return std::chrono::duration<double>(b - a).count(); };
  r.timings = {secs(t0, t1), secs(t1, t2), secs(t2, t3)};
  return r;
}

template <class T>
std::vector<int> index_by_name(const std::vector<T>& want, const std::vector<T>& have) {
  std::vector<int> out;
  for (auto& w : want) out.push_back(static_cast<int>(std::find(have.begin(), have.end(), w) - have.begin()));
  return out;
}

}  // namespace detail

/// Studies are fitted in a canonical (name-sorted) order and the results are
/// mapped back, so the outcome does not depend on the row order of the input.
inline FitResult fit(const Dataset& data, const ModelSpec& spec, const PriorConfig& priors, const FitOptions& options = {}) {
  const DesignBundle design = build_design(data, spec);
  std::vector<int> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return data.studies[a].studyname < data.studies[b].studyname; });
  Dataset canon = data;
  for (std::size_t i = 0; i < order.size(); ++i) canon.studies[i] = data.studies[order[i]];
  FitResult r = detail::fit_in_order(canon, spec, priors, options);

  const int p = design.n_fixed();
  std::vector<int> map = detail::index_by_name(design.fixed_effect_names, r.design.fixed_effect_names);
  const auto studies = detail::index_by_name(design.study_names, r.design.study_names);
  for (int s : studies) {
    map.push_back(p + 2 * s);
    map.push_back(p + 2 * s + 1);
  }
  const Eigen::Index n = static_cast<Eigen::Index>(map.size());
  auto vec = [&](const Eigen::VectorXd& v) {
    Eigen::VectorXd o(n);
    for (Eigen::Index a = 0; a < n; ++a) o[a] = v[map[a]];
    return o;
  };
  auto mat = [&](const Eigen::MatrixXd& m) {
    Eigen::MatrixXd o(n, n);
    for (Eigen::Index a = 0; a < n; ++a)
      for (Eigen::Index b = 0; b < n; ++b) o(a, b) = m(map[a], map[b]);
    return o;
  };
  for (auto& g : r.approx) {
    g.mode = vec(g.mode);
    g.precision = mat(g.precision);
  }
  for (auto& c : r.covariance) c = mat(c);
  if (r.samples) {
    Eigen::MatrixXd L(r.samples->latent.rows(), n);
    for (Eigen::Index a = 0; a < n; ++a) L.col(a) = r.samples->latent.col(map[a]);
    r.samples->latent = std::move(L);
  }
  std::vector<Marginal> fixed;
  for (int j = 0; j < p; ++j) fixed.push_back(r.fixed[map[j]]);
  r.fixed = std::move(fixed);
  std::vector<LevelCorrelation> cors;
  for (int l = 0; l < design.n_levels(); ++l)
    for (auto& c : r.mu_nu_correlation)
      if (c.level == design.level_label(l)) cors.push_back(c);
  r.mu_nu_correlation = std::move(cors);
  r.data = data;
  r.design = design;
  return r;
}

}  // namespace diagmeta
