#pragma once

// Device-independent geometry for SROC, forest and crosshair plots.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "diagmeta/accuracy.hpp"

namespace diagmeta {

struct RocPoint {
  double x = 0;  // 1 - specificity
  double y = 0;  // sensitivity
  bool operator==(const RocPoint&) const = default;
};

enum class CurveKind { sroc_line, credible_region, prediction_region, summary_point, data_bubble, crosshair };

inline std::string to_string(CurveKind k) {
  switch (k) {
    case CurveKind::sroc_line: return "sroc_line";
    case CurveKind::credible_region: return "credible_region";
    case CurveKind::prediction_region: return "prediction_region";
    case CurveKind::summary_point: return "summary_point";
    case CurveKind::data_bubble: return "data_bubble";
    case CurveKind::crosshair: return "crosshair";
  }
  return "?";
}

struct Style {
  std::string stroke = "black";
  std::string fill = "none";
  double width = 1.5;
  std::string dash;    // SVG dash array, empty for solid
  double radius = 3;   // markers and bubbles
  double opacity = 1;
};

struct CurveGeometry {
  CurveKind kind = CurveKind::sroc_line;
  std::vector<RocPoint> points;
  Style style;
  std::string label;
  bool closed = false;
};

// ---------------------------------------------------------------------------
// SROC lines

/// Posterior-mean quantities the SROC formulations are built from, in the
/// model's own orientation (first measure, second measure).
struct SrocInputs {
  int model_type = 1;
  Link link = Link::logit;
  double mu = 0, nu = 0;         // linear predictors of the summary point
  double var1 = 1, var2 = 1, rho = 0;
  double sp_lo = 0.01, sp_hi = 0.99;  // plotting range in specificity
};

inline std::pair<double, double> orientation_signs(int model_type) {
  switch (model_type) {
    case 1: return {1, 1};
    case 2: return {1, -1};
    case 3: return {-1, 1};
    case 4: return {-1, -1};
  }
  throw ValidationError("model type must be 1, 2, 3 or 4");
}

/// Slope B of logit(Se) = mu + B (logit(Sp) - nu) in Se/Sp orientation.
/// Returns nullopt where the formulation is undefined.
inline std::optional<double> sroc_slope_se_sp(int sroc_type, double var1, double var2, double rho) {
  const double sf = std::sqrt(var1), sp = std::sqrt(var2);
  const double a = var1, b = var2, c = rho * sf * sp;
  switch (sroc_type) {
    case 1: return rho * sf / sp;
    case 2: {
      if (c == 0) return a > b ? std::nullopt : std::optional<double>(0.0);
      const double lmax = 0.5 * (a + b) + std::sqrt(0.25 * (a - b) * (a - b) + c * c);
      return (lmax - b) / c;
    }
    case 3: {
      // D = phi + psi, S = phi - psi with psi the Sp effect; D-on-S slope
      const double den = a + b - 2 * c;
      if (den <= 0) return std::nullopt;
      const double beta = (a - b) / den;
      if (beta == 1) return std::nullopt;
      return -(1 + beta) / (1 - beta);
    }
    case 4:
      if (rho == 0) return std::nullopt;
      return sf / (rho * sp);
    case 5: return -sf / sp;
  }
  throw ValidationError("sroc type must be 1..5");
}

/// Slope in the model's orientation: flipping a measure negates its random effect.
inline std::optional<double> sroc_slope(const SrocInputs& in, int sroc_type) {
  const auto [s1, s2] = orientation_signs(in.model_type);
  const auto B = sroc_slope_se_sp(sroc_type, in.var1, in.var2, s1 * s2 * in.rho);
  if (!B) return std::nullopt;
  return s1 * s2 * *B;
}

/// Model-orientation link value of the second measure for a specificity.
inline double second_predictor_from_sp(const SrocInputs& in, double sp) {
  const auto [s1, s2] = orientation_signs(in.model_type);
  return apply_link(in.link, s2 > 0 ? sp : 1 - sp);
}

inline RocPoint roc_from_predictors(int model_type, Link link, double eta1, double eta2) {
  const auto [se, sp] = se_sp_from_predictors(model_type, link, eta1, eta2);
  return {1 - sp, se};
}

/// First linear predictor on the SROC line at a given second predictor.
inline double sroc_line_value(const SrocInputs& in, int sroc_type, double eta2) {
  const auto B = sroc_slope(in, sroc_type);
  if (!B) throw NumericError("SROC type " + std::to_string(sroc_type) + " is unavailable for these estimates");
  return in.mu + *B * (eta2 - in.nu);
}

inline CurveGeometry sroc_curve(const SrocInputs& in, int sroc_type, std::size_t npoints = 101) {
  if (sroc_type < 1 || sroc_type > 5) throw ValidationError("sroc type must be 1..5");
  CurveGeometry g;
  g.kind = CurveKind::sroc_line;
  for (double sp : linspace(in.sp_lo, in.sp_hi, npoints)) {
    const double e2 = second_predictor_from_sp(in, sp);
    g.points.push_back(roc_from_predictors(in.model_type, in.link, sroc_line_value(in, sroc_type, e2), e2));
  }
  std::sort(g.points.begin(), g.points.end(), [](const RocPoint& a, const RocPoint& b) { return a.x < b.x; });
  return g;
}

// ---------------------------------------------------------------------------
// Walter's regression SROC

struct WalterSroc {
  double a = 0, b = 0;
  CurveGeometry curve;
};

/// Sensitivity on the Walter curve at false positive rate x.
inline double walter_sroc_value(double a, double b, double x) {
  if (x <= 0) return (1 + b) / (1 - b) > 0 ? 0.0 : 1.0;
  if (x >= 1) return (1 + b) / (1 - b) > 0 ? 1.0 : 0.0;
  const double l = a / (1 - b) + (1 + b) / (1 - b) * logit(x);
  return inv_logit(l);
}

/// OLS of D = logit Se - logit FPR on S = logit Se + logit FPR over the
/// per-study estimates (Se, Sp).
inline WalterSroc walter_sroc(const std::vector<std::pair<double, double>>& se_sp, std::size_t npoints = 101) {
  if (se_sp.size() < 2) throw ValidationError("Walter SROC needs at least 2 studies");
  std::vector<double> D, S;
  for (auto& [se, sp] : se_sp) {
    if (!(se > 0 && se < 1 && sp > 0 && sp < 1)) throw ValidationError("Walter SROC: estimates must lie strictly inside (0,1)");
    D.push_back(logit(se) - logit(1 - sp));
    S.push_back(logit(se) + logit(1 - sp));
  }
  const double n = static_cast<double>(D.size());
  double ms = 0, md = 0;
  for (std::size_t i = 0; i < D.size(); ++i) {
    ms += S[i] / n;
    md += D[i] / n;
  }
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < D.size(); ++i) {
    sxx += (S[i] - ms) * (S[i] - ms);
    sxy += (S[i] - ms) * (D[i] - md);
  }
  if (sxx <= 0) throw NumericError("Walter SROC: S has no spread");
  WalterSroc w;
  w.b = sxy / sxx;
  w.a = md - w.b * ms;
  if (std::abs(1 - w.b) < 1e-12) throw NumericError("Walter SROC: slope b = 1 makes the curve singular");
  w.curve.kind = CurveKind::sroc_line;
  w.curve.label = "Walter";
  for (double x : linspace(0, 1, npoints)) w.curve.points.push_back({x, walter_sroc_value(w.a, w.b, x)});
  return w;
}

// ---------------------------------------------------------------------------
// regions

/// Ellipse {m + r L (cos t, sin t)} in predictor space mapped to ROC space.
inline CurveGeometry ellipse_from_moments(int model_type, Link link, const Eigen::Vector2d& m, const Eigen::Matrix2d& S,
                                          double level, CurveKind kind, std::size_t npoints = 100) {
  if (!(level > 0 && level < 1)) throw ValidationError("region level must lie in (0,1)");
  Eigen::LLT<Eigen::Matrix2d> llt(S);
  if (llt.info() != Eigen::Success) throw NumericError("region covariance not positive definite");
  const Eigen::Matrix2d L = llt.matrixL();
  const double r = std::sqrt(-2 * std::log1p(-level));
  CurveGeometry g;
  g.kind = kind;
  g.closed = true;
  for (std::size_t i = 0; i < npoints; ++i) {
    const double t = 2 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(npoints);
    const Eigen::Vector2d e = m + r * L * Eigen::Vector2d(std::cos(t), std::sin(t));
    g.points.push_back(roc_from_predictors(model_type, link, e[0], e[1]));
  }
  return g;
}

// ---------------------------------------------------------------------------
// fit-level assembly

namespace detail {
inline void require_no_covariates(const FitResult& f, const char* what) {
  if (f.design.has_covariates())
    throw ValidationError(std::string(what) + " is not available when continuous covariates are in the model");
}

inline std::vector<int> studies_in_level(const FitResult& f, int level) {
  std::vector<int> out;
  for (int i = 0; i < f.design.n_studies(); ++i)
    if (f.design.study_level[i] == level) out.push_back(i);
  return out;
}
}  // namespace detail

inline SrocInputs sroc_inputs(const FitResult& f, int level = 0) {
  detail::require_no_covariates(f, "the SROC summary line");
  SrocInputs in;
  in.model_type = f.design.model_type;
  in.link = f.design.link;
  const auto [m, S] = f.latent_moments(f.design.mu_index(level), f.design.nu_index(level));
  in.mu = m[0];
  in.nu = m[1];
  in.var1 = f.hyper[0].mean();
  in.var2 = f.hyper[1].mean();
  in.rho = f.hyper[2].mean();
  const auto obs = observed_rates(f.data);
  double lo = 1, hi = 0;
  for (int i : detail::studies_in_level(f, level)) {
    lo = std::min(lo, obs[i].second);
    hi = std::max(hi, obs[i].second);
  }
  const double pad = 0.05 * std::max(hi - lo, 1e-3);
  in.sp_lo = std::clamp(lo - pad, 1e-3, 1 - 1e-3);
  in.sp_hi = std::clamp(hi + pad, 1e-3, 1 - 1e-3);
  if (in.sp_hi <= in.sp_lo) in.sp_hi = std::min(1 - 1e-3, in.sp_lo + 1e-3);
  return in;
}

inline CurveGeometry ellipse_region(const FitResult& f, CurveKind kind, double level, int modality_level = 0) {
  detail::require_no_covariates(f, "the credible/prediction region");
  auto [m, S] = f.latent_moments(f.design.mu_index(modality_level), f.design.nu_index(modality_level));
  if (kind == CurveKind::prediction_region) S += f.mean_covariance();
  else if (kind != CurveKind::credible_region) throw ValidationError("region kind must be credible or prediction");
  return ellipse_from_moments(f.design.model_type, f.design.link, m, S, level, kind);
}

inline CurveGeometry summary_point_geometry(const FitResult& f, int level = 0) {
  const auto in = sroc_inputs(f, level);
  CurveGeometry g;
  g.kind = CurveKind::summary_point;
  g.points.push_back(roc_from_predictors(in.model_type, in.link, in.mu, in.nu));
  g.style.fill = "black";
  g.style.radius = 4;
  g.label = f.design.level_label(level);
  return g;
}

/// Observed study points; bubble area proportional to study size.
inline std::vector<CurveGeometry> data_bubbles(const Dataset& d, double max_radius = 12) {
  std::vector<CurveGeometry> out;
  long long biggest = 1;
  for (auto& s : d.studies) biggest = std::max(biggest, s.total());
  const auto obs = observed_rates(d);
  for (std::size_t i = 0; i < d.studies.size(); ++i) {
    CurveGeometry g;
    g.kind = CurveKind::data_bubble;
    g.points.push_back({1 - obs[i].second, obs[i].first});
    g.style.radius = max_radius * std::sqrt(static_cast<double>(d.studies[i].total()) / static_cast<double>(biggest));
    g.style.stroke = "gray";
    g.label = d.studies[i].studyname;
    out.push_back(std::move(g));
  }
  return out;
}

inline const std::vector<std::string>& palette() {
  static const std::vector<std::string> p{"black", "red", "blue", "green", "orange", "purple"};
  return p;
}

struct SrocPlotOptions {
  int sroc_type = 1;
  bool show_data = true;
  bool show_credible = true;
  bool show_prediction = true;
  double level = 0.95;
};

/// Full SROC plot: per modality level a line, regions and summary point; with
/// continuous covariates only the Walter curve and the data.
inline std::vector<CurveGeometry> sroc_plot(const FitResult& f, const SrocPlotOptions& o = {}) {
  std::vector<CurveGeometry> out;
  if (o.show_data) out = data_bubbles(f.data);
  if (f.design.has_covariates()) {
    const auto se = fitted_study_measures(f, AccuracyType::sens);
    const auto sp = fitted_study_measures(f, AccuracyType::spec);
    std::vector<std::pair<double, double>> est;
    for (std::size_t i = 0; i < se.rows.size(); ++i) est.emplace_back(se.rows[i].summary.mean, sp.rows[i].summary.mean);
    auto w = walter_sroc(est);
    out.push_back(std::move(w.curve));
    return out;
  }
  for (int l = 0; l < f.design.n_levels(); ++l) {
    const std::string col = palette()[static_cast<std::size_t>(l) % palette().size()];
    const auto in = sroc_inputs(f, l);
    if (sroc_slope(in, o.sroc_type)) {
      auto c = sroc_curve(in, o.sroc_type);
      c.style.stroke = col;
      c.label = f.design.level_label(l);
      out.push_back(std::move(c));
    }
    if (o.show_prediction) {
      auto p = ellipse_region(f, CurveKind::prediction_region, o.level, l);
      p.style.stroke = l == 0 ? "gray" : col;
      p.style.dash = "2,3";
      p.label = f.design.level_label(l);
      out.push_back(std::move(p));
    }
    if (o.show_credible) {
      auto c = ellipse_region(f, CurveKind::credible_region, o.level, l);
      c.style.stroke = l == 0 ? "blue" : col;
      c.style.dash = "6,4";
      c.label = f.design.level_label(l);
      out.push_back(std::move(c));
    }
    auto s = summary_point_geometry(f, l);
    s.style.fill = col;
    s.style.stroke = col;
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// forest

struct ForestRow {
  std::string label;
  std::string counts;  // "TP FP TN FN" of the study, empty for summary rows
  double estimate = 0, lo = 0, hi = 0;   // clipped to the cut range
  double raw_lo = 0, raw_hi = 0;         // before clipping
  bool clipped_lo = false, clipped_hi = false;
  double marker = 1;
  bool summary = false;
};

struct ForestPartition {
  std::string level;
  std::vector<ForestRow> rows;
};

struct ForestGeometry {
  AccuracyType type = AccuracyType::sens;
  std::string est_type = "mean";
  double interval_lo = 0.025, interval_hi = 0.975;
  double cut_lo = 0, cut_hi = 1;
  std::vector<ForestPartition> partitions;
};

/// Marker sizes: linear and strictly decreasing in interval length, spanning [0.5, 2].
inline std::vector<double> forest_marker_sizes(const std::vector<double>& lengths) {
  if (lengths.empty()) return {};
  const auto [mn, mx] = std::minmax_element(lengths.begin(), lengths.end());
  std::vector<double> out;
  for (double l : lengths) out.push_back(*mx > *mn ? 2.0 - 1.5 * (l - *mn) / (*mx - *mn) : 1.25);
  return out;
}

struct ForestOptions {
  AccuracyType type = AccuracyType::sens;
  std::string est_type = "mean";
  double interval_lo = 0.025, interval_hi = 0.975;
  std::optional<std::pair<double, double>> cut;
};

inline ForestGeometry forest_layout(const FitResult& f, const ForestOptions& o = {}) {
  if (o.est_type != "mean" && o.est_type != "median") throw ValidationError("est_type must be mean or median");
  if (!(o.interval_lo < o.interval_hi)) throw ValidationError("forest interval must satisfy lo < hi");
  const auto probs = f.spec.all_quantiles();
  auto index_of = [&](double p) {
    for (std::size_t i = 0; i < probs.size(); ++i)
      if (std::abs(probs[i] - p) < 1e-9) return i;
    throw ValidationError("requested interval quantile " + detail::format_real(p) + " was not computed; add it to the quantiles");
  };
  const std::size_t ilo = index_of(o.interval_lo), ihi = index_of(o.interval_hi), imed = index_of(0.5);
  const auto tab = fitted_study_measures(f, o.type, probs);

  ForestGeometry g;
  g.type = o.type;
  g.est_type = o.est_type;
  g.interval_lo = o.interval_lo;
  g.interval_hi = o.interval_hi;
  if (o.cut) {
    g.cut_lo = o.cut->first;
    g.cut_hi = o.cut->second;
  } else {
    double lo = kInf, hi = -kInf;
    for (auto& r : tab.rows) {
      lo = std::min(lo, r.summary.quantiles[ilo]);
      hi = std::max(hi, r.summary.quantiles[ihi]);
    }
    if (is_probability(o.type)) {
      lo = std::max(0.0, lo);
      hi = std::min(1.0, hi);
    }
    g.cut_lo = lo;
    g.cut_hi = hi;
  }
  if (!(g.cut_lo < g.cut_hi)) throw ValidationError("forest cut must satisfy min < max");

  auto make_row = [&](std::string label, const SampleSummary& s) {
    ForestRow r;
    r.label = std::move(label);
    r.estimate = o.est_type == "mean" ? s.mean : s.quantiles[imed];
    r.raw_lo = s.quantiles[ilo];
    r.raw_hi = s.quantiles[ihi];
    r.lo = std::clamp(r.raw_lo, g.cut_lo, g.cut_hi);
    r.hi = std::clamp(r.raw_hi, g.cut_lo, g.cut_hi);
    r.clipped_lo = r.raw_lo < g.cut_lo;
    r.clipped_hi = r.raw_hi > g.cut_hi;
    r.estimate = std::clamp(r.estimate, g.cut_lo, g.cut_hi);
    return r;
  };

  std::vector<ForestRow> rows;
  std::vector<double> lengths;
  for (int i = 0; i < f.design.n_studies(); ++i) {
    auto r = make_row(tab.rows[i].studyname, tab.rows[i].summary);
    const auto& s = f.data.studies[i];
    r.counts = std::to_string(s.tp) + " " + std::to_string(s.fp) + " " + std::to_string(s.tn) + " " + std::to_string(s.fn);
    lengths.push_back(r.raw_hi - r.raw_lo);
    rows.push_back(std::move(r));
  }
  const auto sizes = forest_marker_sizes(lengths);
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i].marker = sizes[i];

  std::vector<std::optional<ForestRow>> summary(f.design.n_levels());
  if (!f.design.has_covariates()) {
    const auto& smp = detail::require_samples(f);
    for (int l = 0; l < f.design.n_levels(); ++l) {
      std::vector<double> v(smp.size());
      for (int k = 0; k < smp.size(); ++k) {
        const auto [se, sp] = se_sp_from_predictors(f.design.model_type, f.design.link,
                                                    smp.latent(k, f.design.mu_index(l)), smp.latent(k, f.design.nu_index(l)));
        v[k] = measure_from_pair(se, sp, o.type);
      }
      const std::string lab = f.design.levels.empty() ? "Summary" : "Summary." + f.design.level_label(l);
      auto r = make_row(lab, summarise_sample(std::move(v), probs));
      r.summary = true;
      r.marker = 2;
      summary[l] = std::move(r);
    }
  }
  for (int l = 0; l < f.design.n_levels(); ++l) {
    ForestPartition p;
    p.level = f.design.level_label(l);
    for (int i = 0; i < f.design.n_studies(); ++i)
      if (f.design.study_level[i] == l) p.rows.push_back(rows[i]);
    if (summary[l]) p.rows.push_back(*summary[l]);
    g.partitions.push_back(std::move(p));
  }
  return g;
}

// ---------------------------------------------------------------------------
// crosshair

struct CrosshairOptions {
  std::string est_type = "mean";
  double interval_lo = 0.025, interval_hi = 0.975;
};

/// Per study: points = {center, (FPR lo, y), (FPR hi, y), (x, Se lo), (x, Se hi)}.
inline std::vector<CurveGeometry> crosshair_layout(const FitResult& f, const CrosshairOptions& o = {}) {
  if (o.est_type != "mean" && o.est_type != "median") throw ValidationError("est_type must be mean or median");
  std::vector<double> probs{o.interval_lo, 0.5, o.interval_hi};
  const auto se = fitted_study_measures(f, AccuracyType::sens, probs);
  const auto fpr = fitted_study_measures(f, AccuracyType::FPR, probs);
  std::vector<CurveGeometry> out;
  for (int i = 0; i < f.design.n_studies(); ++i) {
    const auto& a = se.rows[i].summary;
    const auto& b = fpr.rows[i].summary;
    const double cy = o.est_type == "mean" ? a.mean : a.quantiles[1];
    const double cx = o.est_type == "mean" ? b.mean : b.quantiles[1];
    CurveGeometry g;
    g.kind = CurveKind::crosshair;
    g.label = f.design.study_names[i];
    g.points = {{cx, cy}, {b.quantiles[0], cy}, {b.quantiles[2], cy}, {cx, a.quantiles[0]}, {cx, a.quantiles[2]}};
    g.style.stroke = palette()[static_cast<std::size_t>(f.design.study_level[i]) % palette().size()];
    out.push_back(std::move(g));
  }
  return out;
}

}  // namespace diagmeta
