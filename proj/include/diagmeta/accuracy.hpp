#pragma once

// Accuracy measures from posterior samples: per-study fitted tables and the
// summary operating points.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "diagmeta/inference.hpp"

namespace diagmeta {

enum class AccuracyType { sens, spec, TPR, TNR, FPR, FNR, LRpos, LRneg, RD, DOR, LLRpos, LLRneg, LDOR };

inline const std::vector<std::pair<AccuracyType, std::string>>& accuracy_type_names() {
  static const std::vector<std::pair<AccuracyType, std::string>> n{
      {AccuracyType::sens, "sens"},     {AccuracyType::spec, "spec"},     {AccuracyType::TPR, "TPR"},
      {AccuracyType::TNR, "TNR"},       {AccuracyType::FPR, "FPR"},       {AccuracyType::FNR, "FNR"},
      {AccuracyType::LRpos, "LRpos"},   {AccuracyType::LRneg, "LRneg"},   {AccuracyType::RD, "RD"},
      {AccuracyType::DOR, "DOR"},       {AccuracyType::LLRpos, "LLRpos"}, {AccuracyType::LLRneg, "LLRneg"},
      {AccuracyType::LDOR, "LDOR"}};
  return n;
}

inline std::string to_string(AccuracyType t) {
  for (auto& [k, n] : accuracy_type_names())
    if (k == t) return n;
  return "?";
}

inline AccuracyType parse_accuracy_type(const std::string& s) {
  for (auto& [k, n] : accuracy_type_names())
    if (lower(n) == lower(s)) return k;
  throw ValidationError("unknown accuracy type '" + s + "'");
}

/// Probability-valued measures live in [0, 1].
inline bool is_probability(AccuracyType t) {
  switch (t) {
    case AccuracyType::sens: case AccuracyType::spec: case AccuracyType::TPR:
    case AccuracyType::TNR: case AccuracyType::FPR: case AccuracyType::FNR: return true;
    default: return false;
  }
}

inline double measure_from_pair(double se, double sp, AccuracyType t) {
  auto ratio = [](double a, double b) {
    if (b == 0) throw NumericError("accuracy measure: division by zero at the boundary");
    return a / b;
  };
  switch (t) {
    case AccuracyType::sens:
    case AccuracyType::TPR: return se;
    case AccuracyType::spec:
    case AccuracyType::TNR: return sp;
    case AccuracyType::FPR: return 1 - sp;
    case AccuracyType::FNR: return 1 - se;
    case AccuracyType::LRpos: return ratio(se, 1 - sp);
    case AccuracyType::LRneg: return ratio(1 - se, sp);
    case AccuracyType::RD: return se + sp - 1;
    case AccuracyType::DOR: return ratio(ratio(se, 1 - sp), ratio(1 - se, sp));
    case AccuracyType::LLRpos: return std::log(ratio(se, 1 - sp));
    case AccuracyType::LLRneg: return std::log(ratio(1 - se, sp));
    case AccuracyType::LDOR: return std::log(ratio(ratio(se, 1 - sp), ratio(1 - se, sp)));
  }
  return 0;
}

/// (Se, Sp) from the two linear predictors of a row pair under the model type.
inline std::pair<double, double> se_sp_from_predictors(int model_type, Link link, double eta1, double eta2) {
  const double p1 = inverse_link(link, eta1), p2 = inverse_link(link, eta2);
  switch (model_type) {
    case 1: return {p1, p2};
    case 2: return {p1, 1 - p2};
    case 3: return {1 - p1, p2};
    case 4: return {1 - p1, 1 - p2};
  }
  throw ValidationError("model type must be 1, 2, 3 or 4");
}

struct SampleSummary {
  double mean = 0, sd = 0, mcse = 0;
  std::vector<double> quantiles;  // aligned with the probability list
};

inline SampleSummary summarise_sample(std::vector<double> v, const std::vector<double>& probs) {
  SampleSummary s;
  const double n = static_cast<double>(v.size());
  for (double x : v) s.mean += x;
  s.mean /= n;
  for (double x : v) s.sd += (x - s.mean) * (x - s.mean);
  s.sd = v.size() > 1 ? std::sqrt(s.sd / (n - 1)) : 0.0;
  s.mcse = s.sd / std::sqrt(n);
  std::sort(v.begin(), v.end());
  for (double p : probs) s.quantiles.push_back(sample_quantile(v, p));
  return s;
}

struct StudyAccuracyRow {
  std::string studyname;
  SampleSummary summary;
};

struct StudyAccuracyTable {
  AccuracyType type = AccuracyType::sens;
  std::vector<double> probs;
  std::vector<StudyAccuracyRow> rows;
};

namespace detail {
inline const PosteriorSamples& require_samples(const FitResult& f) {
  if (!f.samples || f.samples->size() == 0) throw ValidationError("fit carries no posterior samples (nsample = 0)");
  return *f.samples;
}
}  // namespace detail

/// Per-draw (Se_i, Sp_i) for study i.
inline std::vector<std::pair<double, double>> study_se_sp_draws(const FitResult& f, int study) {
  const auto& s = detail::require_samples(f);
  const Eigen::MatrixXd A = f.design.full_design();
  const Eigen::RowVectorXd a1 = A.row(2 * study), a2 = A.row(2 * study + 1);
  std::vector<std::pair<double, double>> out(s.size());
  for (int k = 0; k < s.size(); ++k) {
    const double e1 = a1.dot(s.latent.row(k)), e2 = a2.dot(s.latent.row(k));
    out[k] = se_sp_from_predictors(f.design.model_type, f.design.link, e1, e2);
  }
  return out;
}

inline StudyAccuracyTable fitted_study_measures(const FitResult& f, AccuracyType t, std::vector<double> probs = {}) {
  if (probs.empty()) probs = f.spec.all_quantiles();
  StudyAccuracyTable tab{t, probs, {}};
  for (int i = 0; i < f.design.n_studies(); ++i) {
    const auto draws = study_se_sp_draws(f, i);
    std::vector<double> v;
    v.reserve(draws.size());
    for (auto& [se, sp] : draws) v.push_back(measure_from_pair(se, sp, t));
    tab.rows.push_back({f.design.study_names[i], summarise_sample(std::move(v), probs)});
  }
  return tab;
}

struct SummaryPoint {
  std::string level;  // empty without modality
  SampleSummary se, sp;
};

/// mean(Se)/mean(Sp) per modality level. Not available with continuous covariates.
inline std::vector<SummaryPoint> summary_points(const FitResult& f, std::vector<double> probs = {}) {
  if (f.design.has_covariates()) return {};
  const auto& s = detail::require_samples(f);
  if (probs.empty()) probs = f.spec.all_quantiles();
  std::vector<SummaryPoint> out;
  for (int l = 0; l < f.design.n_levels(); ++l) {
    std::vector<double> se(s.size()), sp(s.size());
    for (int k = 0; k < s.size(); ++k) {
      const auto [a, b] = se_sp_from_predictors(f.design.model_type, f.design.link,
                                                s.latent(k, f.design.mu_index(l)), s.latent(k, f.design.nu_index(l)));
      se[k] = a;
      sp[k] = b;
    }
    out.push_back({f.design.level_label(l), summarise_sample(std::move(se), probs), summarise_sample(std::move(sp), probs)});
  }
  return out;
}

/// Observed (Se, Sp) of each study, for plot overlays only.
inline std::vector<std::pair<double, double>> observed_rates(const Dataset& d) {
  std::vector<std::pair<double, double>> out;
  for (auto& s : d.studies)
    out.emplace_back(static_cast<double>(s.tp) / static_cast<double>(s.diseased()),
                     static_cast<double>(s.tn) / static_cast<double>(s.healthy()));
  return out;
}

}  // namespace diagmeta
