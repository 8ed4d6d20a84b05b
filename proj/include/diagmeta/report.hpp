#pragma once

// Plain-text summary and fitted tables in the familiar R-console layout.

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "diagmeta/accuracy.hpp"
#include "diagmeta/json_io.hpp"

namespace diagmeta {

namespace report_detail {

inline std::string fmt(double v, int digits = 3) {
  char b[48];
  std::snprintf(b, sizeof b, "%.*f", digits, v);
  return b;
}

/// Right-aligned numeric table with left-aligned row labels.
inline std::string table(const std::vector<std::string>& head, const std::vector<std::string>& labels,
                         const std::vector<std::vector<std::string>>& cells) {
  std::size_t lw = 0;
  for (auto& l : labels) lw = std::max(lw, l.size());
  std::vector<std::size_t> cw(head.size());
  for (std::size_t c = 0; c < head.size(); ++c) {
    cw[c] = head[c].size();
    for (auto& row : cells) cw[c] = std::max(cw[c], row[c].size());
  }
  std::ostringstream os;
  os << std::string(lw, ' ');
  for (std::size_t c = 0; c < head.size(); ++c) os << ' ' << std::string(cw[c] - head[c].size(), ' ') << head[c];
  os << '\n';
  for (std::size_t r = 0; r < labels.size(); ++r) {
    os << labels[r] << std::string(lw - labels[r].size(), ' ');
    for (std::size_t c = 0; c < head.size(); ++c) os << ' ' << std::string(cw[c] - cells[r][c].size(), ' ') << cells[r][c];
    os << '\n';
  }
  return os.str();
}

inline std::vector<std::string> header(const std::vector<double>& probs) {
  std::vector<std::string> h{"mean", "sd"};
  for (double p : probs) h.push_back(quantile_key(p));
  return h;
}

}  // namespace report_detail

inline std::string format_summary(const FitResult& f, bool show_timings = true) {
  using namespace report_detail;
  const auto probs = f.spec.all_quantiles();
  const auto head = header(probs);
  std::ostringstream os;
  if (show_timings) {
    os << "Time used: \n";
    os << table({"Pre-processing", "Running", "Post-processing", "Total"}, {""},
                {{fmt(f.timings.pre, 7), fmt(f.timings.run, 7), fmt(f.timings.post, 7), fmt(f.timings.total(), 7)}});
    os << '\n';
  }
  os << "Fixed effects: \n";
  {
    std::vector<std::string> labels;
    std::vector<std::vector<std::string>> cells;
    for (auto& m : f.fixed) {
      labels.push_back(m.name());
      std::vector<std::string> row{fmt(m.mean()), fmt(m.sd())};
      for (double p : probs) row.push_back(fmt(m.quantile(p)));
      cells.push_back(row);
    }
    os << table(head, labels, cells) << '\n';
  }
  os << "Model hyperpar: \n";
  {
    std::vector<std::string> labels;
    std::vector<std::vector<std::string>> cells;
    for (auto& m : f.hyper) {
      labels.push_back(hyper_label(m.name()));
      std::vector<std::string> row{fmt(m.mean()), fmt(m.sd())};
      for (double p : probs) row.push_back(fmt(m.quantile(p)));
      cells.push_back(row);
    }
    os << table(head, labels, cells);
  }
  if (f.samples && !f.design.has_covariates()) {
    os << "\n-------------------\n";
    const auto pts = summary_points(f, probs);
    std::vector<std::string> labels;
    std::vector<std::vector<std::string>> cells;
    auto add = [&](const std::string& lab, const SampleSummary& s) {
      labels.push_back(lab);
      std::vector<std::string> row{fmt(s.mean), fmt(s.sd)};
      for (double q : s.quantiles) row.push_back(fmt(q));
      cells.push_back(row);
    };
    for (auto& p : pts) add(p.level.empty() ? "mean(Se)" : "mean(Se." + p.level + ")", p.se);
    for (auto& p : pts) add(p.level.empty() ? "mean(Sp)" : "mean(Sp." + p.level + ")", p.sp);
    os << table(head, labels, cells);
  }
  os << "\n-------------------\n";
  for (int l = 0; l < f.design.n_levels(); ++l)
    os << "Correlation between " << f.design.fixed_effect_names[f.design.mu_index(l)] << " and "
       << f.design.fixed_effect_names[f.design.nu_index(l)] << " is " << fmt(f.mu_nu_correlation[l].value, 4) << ".\n";
  os << "Marginal log-likelihood: " << fmt(f.mlik, 4) << '\n';
  os << "Variable names for marginal plotting: \n      ";
  std::vector<std::string> names = f.design.fixed_effect_names;
  for (auto& n : hyper_names()) names.push_back(n);
  for (std::size_t i = 0; i < names.size(); ++i) os << (i ? ", " : "") << names[i];
  os << '\n';
  return os.str();
}

inline std::string accuracy_title(AccuracyType t) {
  switch (t) {
    case AccuracyType::sens: return "sensitivity";
    case AccuracyType::spec: return "specificity";
    case AccuracyType::TPR: return "true positive rate (sensitivity)";
    case AccuracyType::TNR: return "true negative rate (specificity)";
    case AccuracyType::FPR: return "false positive rate (1-specificity)";
    case AccuracyType::FNR: return "false negative rate (1-sensitivity)";
    case AccuracyType::LRpos: return "positive likelihood ratio (LR+)";
    case AccuracyType::LRneg: return "negative likelihood ratio (LR-)";
    case AccuracyType::RD: return "risk difference (RD)";
    case AccuracyType::DOR: return "diagnostic odds ratio (DOR)";
    case AccuracyType::LLRpos: return "log positive likelihood ratio (LLR+)";
    case AccuracyType::LLRneg: return "log negative likelihood ratio (LLR-)";
    case AccuracyType::LDOR: return "log diagnostic odds ratio (LDOR)";
  }
  return "";
}

inline std::string format_fitted(const StudyAccuracyTable& t) {
  using namespace report_detail;
  std::vector<std::string> labels;
  std::vector<std::vector<std::string>> cells;
  for (auto& r : t.rows) {
    labels.push_back(r.studyname);
    std::vector<std::string> row{fmt(r.summary.mean), fmt(r.summary.sd)};
    for (double q : r.summary.quantiles) row.push_back(fmt(q));
    cells.push_back(row);
  }
  return "Diagnostic accuracies " + accuracy_title(t.type) + ": \n" + table(header(t.probs), labels, cells);
}

/// Comma-separated study table, for export.
inline std::string fitted_csv(const StudyAccuracyTable& t) {
  std::ostringstream os;
  os << "studyname,mean,sd";
  for (double p : t.probs) os << ',' << quantile_key(p);
  os << '\n';
  for (auto& r : t.rows) {
    os << detail::csv_escape(r.studyname) << ',' << detail::format_real(round6(r.summary.mean)) << ','
       << detail::format_real(round6(r.summary.sd));
    for (double q : r.summary.quantiles) os << ',' << detail::format_real(round6(q));
    os << '\n';
  }
  return os.str();
}

}  // namespace diagmeta
