#pragma once

// Study-level two-by-two tables, model specification and the design objects
// consumed by the inference engine.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "diagmeta/links.hpp"
#include "diagmeta/numeric.hpp"

namespace diagmeta {

struct StudyRecord {
  std::string studyname;
  long long tp = 0, fp = 0, tn = 0, fn = 0;
  std::optional<std::string> modality;
  std::vector<std::pair<std::string, double>> covariates;
  // non-numeric extra columns, kept so a later model spec can pick one as modality
  std::vector<std::pair<std::string, std::string>> attributes;

  long long diseased() const { return tp + fn; }
  long long healthy() const { return tn + fp; }
  long long total() const { return tp + fp + tn + fn; }

  bool operator==(const StudyRecord&) const = default;
};

struct Dataset {
  std::vector<StudyRecord> studies;
  std::optional<std::string> modality_column;
  std::vector<std::string> modality_levels;
  std::vector<std::string> covariate_names;
  std::vector<std::string> attribute_names;

  std::size_t size() const { return studies.size(); }
  bool operator==(const Dataset&) const = default;
};

struct IngestOptions {
  std::optional<std::string> modality_column;
};

/// Which accuracy measure a binomial row models.
enum class Measure { sens, spec, fpr, fnr };

struct ModelSpec {
  int model_type = 1;
  Link link = Link::logit;
  std::optional<std::string> modality_column;
  std::vector<std::string> covariate_columns;
  std::vector<double> quantiles{0.025, 0.5, 0.975};
  int nsample = 5000;
  std::uint64_t seed = 1;

  /// Requested quantiles merged with the three that are always reported.
  std::vector<double> all_quantiles() const {
    std::vector<double> q = quantiles;
    q.insert(q.end(), {0.025, 0.5, 0.975});
    std::sort(q.begin(), q.end());
    q.erase(std::unique(q.begin(), q.end(), [](double a, double b) { return std::abs(a - b) < 1e-12; }),
            q.end());
    return q;
  }
};

/// (first, second) measures modelled by each model type.
inline std::pair<Measure, Measure> measures_for(int model_type) {
  switch (model_type) {
    case 1: return {Measure::sens, Measure::spec};
    case 2: return {Measure::sens, Measure::fpr};
    case 3: return {Measure::fnr, Measure::spec};
    case 4: return {Measure::fnr, Measure::fpr};
    default: throw ValidationError("model type must be 1, 2, 3 or 4");
  }
}

struct ValidationReport {
  std::vector<std::string> findings;
  bool ok() const { return findings.empty(); }
};

// ---------------------------------------------------------------------------
// CSV

namespace detail {

inline std::vector<std::vector<std::string>> split_csv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, any = false;
  if (text.size() >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
      }
      row.clear();
      field.clear();
      any = false;
    } else {
      field += c;
      any = true;
    }
  }
  if (quoted) throw ValidationError("unterminated quoted field in CSV");
  if (any || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

inline std::optional<long long> parse_integer(const std::string& s) {
  long long v = 0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (first != last && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || first == last) return std::nullopt;
  return v;
}

inline std::optional<double> parse_real(const std::string& s) {
  if (s.empty()) return std::nullopt;
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
  } catch (...) {
    return std::nullopt;
  }
}

inline bool is_missing(const std::string& s) { return s.empty() || s == "NA" || s == "na" || s == "NaN"; }

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  // prefer the shortest representation that round-trips
  for (int prec = 1; prec <= 17; ++prec) {
    char b2[40];
    std::snprintf(b2, sizeof b2, "%.*g", prec, v);
    if (std::stod(b2) == v) return b2;
  }
  return buf;
}

}  // namespace detail

/// Identifier-safe level name: spaces and dashes become dots.
inline std::string sanitize_level(std::string s) {
  for (auto& c : s)
    if (c == ' ' || c == '-') c = '.';
  return s;
}

/// Parses a comma-separated table with a header row. TP, FP, TN, FN and
/// studynames are matched case-insensitively; remaining numeric columns become
/// covariates, remaining text columns attributes.
inline Dataset parse_dataset(std::string_view csv_text, const IngestOptions& options = {}) {
  using detail::trim;
  auto rows = detail::split_csv(csv_text);
  if (rows.empty()) throw ValidationError("empty CSV: a header row is required");
  std::vector<std::string> header;
  for (auto& h : rows[0]) header.push_back(trim(h));
  const std::size_t ncol = header.size();

  auto find = [&](std::string_view name) -> std::optional<std::size_t> {
    for (std::size_t j = 0; j < ncol; ++j)
      if (lower(header[j]) == name) return j;
    return std::nullopt;
  };
  std::map<std::string, std::size_t> count_col;
  for (const char* name : {"tp", "fp", "tn", "fn"}) {
    const auto j = find(name);
    if (!j) {
      std::string upper = name;
      for (auto& c : upper) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
      throw ValidationError("missing mandatory column " + upper);
    }
    count_col[name] = *j;
  }
  auto name_col = find("studynames");
  if (!name_col) name_col = find("studyname");

  std::optional<std::size_t> modality_col;
  if (options.modality_column) {
    modality_col = find(lower(*options.modality_column));
    if (!modality_col) throw ValidationError("modality column absent: " + *options.modality_column);
  }

  std::vector<std::size_t> extra;
  for (std::size_t j = 0; j < ncol; ++j) {
    const bool reserved = (name_col && j == *name_col) || (modality_col && j == *modality_col) ||
                          j == count_col["tp"] || j == count_col["fp"] || j == count_col["tn"] ||
                          j == count_col["fn"];
    if (!reserved) extra.push_back(j);
  }
  std::set<std::string> seen_headers;
  for (auto& h : header) {
    if (h.empty()) throw ValidationError("empty column name in header");
    if (!seen_headers.insert(lower(h)).second) throw ValidationError("duplicate column name " + h);
  }

  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != ncol)
      throw ValidationError("ragged row " + std::to_string(r) + ": " + std::to_string(rows[r].size()) +
                            " fields, header has " + std::to_string(ncol));
    for (auto& f : rows[r]) f = trim(f);
  }

  // classify extra columns: numeric covariates vs text attributes
  std::vector<bool> numeric(ncol, false);
  for (std::size_t j : extra) {
    bool all_numeric = true, any_missing = false;
    for (std::size_t r = 1; r < rows.size(); ++r) {
      const auto& v = rows[r][j];
      if (detail::is_missing(v)) any_missing = true;
      else if (!detail::parse_real(v)) all_numeric = false;
    }
    numeric[j] = all_numeric;
    if (all_numeric && any_missing && rows.size() > 1)
      throw ValidationError("missing covariate value in column " + header[j]);
  }

  Dataset d;
  if (modality_col) d.modality_column = header[*modality_col];
  for (std::size_t j : extra) (numeric[j] ? d.covariate_names : d.attribute_names).push_back(header[j]);

  std::set<std::string> names;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    StudyRecord s;
    s.studyname = name_col ? row[*name_col] : "study_" + std::to_string(r);
    auto count = [&](const char* key, const char* label) {
      const auto v = detail::parse_integer(row[count_col[key]]);
      if (!v) throw ValidationError(std::string("non-integer count in column ") + label + " at row " +
                                    std::to_string(r) + ": '" + row[count_col[key]] + "'");
      if (*v < 0) throw ValidationError(std::string("negative count in column ") + label + " at row " +
                                        std::to_string(r));
      return *v;
    };
    s.tp = count("tp", "TP");
    s.fp = count("fp", "FP");
    s.tn = count("tn", "TN");
    s.fn = count("fn", "FN");
    if (modality_col) {
      if (detail::is_missing(row[*modality_col]))
        throw ValidationError("missing modality label at row " + std::to_string(r));
      s.modality = row[*modality_col];
      if (std::find(d.modality_levels.begin(), d.modality_levels.end(), *s.modality) == d.modality_levels.end())
        d.modality_levels.push_back(*s.modality);
    }
    for (std::size_t j : extra) {
      if (numeric[j]) s.covariates.emplace_back(header[j], *detail::parse_real(row[j]));
      else s.attributes.emplace_back(header[j], row[j]);
    }
    if (s.studyname.empty()) throw ValidationError("empty study name at row " + std::to_string(r));
    if (!names.insert(s.studyname).second) throw ValidationError("duplicate study name " + s.studyname);
    d.studies.push_back(std::move(s));
  }
  return d;
}

inline std::string to_csv(const Dataset& d) {
  std::ostringstream os;
  os << "studynames";
  if (d.modality_column) os << ',' << detail::csv_escape(*d.modality_column);
  os << ",TP,FP,TN,FN";
  for (auto& c : d.covariate_names) os << ',' << detail::csv_escape(c);
  for (auto& c : d.attribute_names) os << ',' << detail::csv_escape(c);
  os << '\n';
  for (auto& s : d.studies) {
    os << detail::csv_escape(s.studyname);
    if (d.modality_column) os << ',' << detail::csv_escape(s.modality.value_or(""));
    os << ',' << s.tp << ',' << s.fp << ',' << s.tn << ',' << s.fn;
    for (auto& [n, v] : s.covariates) os << ',' << detail::format_real(v);
    for (auto& [n, v] : s.attributes) os << ',' << detail::csv_escape(v);
    os << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// validation

namespace detail {

inline std::optional<std::string> study_label(const StudyRecord& s, const Dataset& d, const std::string& column) {
  if (d.modality_column && lower(*d.modality_column) == lower(column)) return s.modality;
  for (auto& [n, v] : s.attributes)
    if (lower(n) == lower(column)) return v;
  for (auto& [n, v] : s.covariates)
    if (lower(n) == lower(column)) return format_real(v);
  return std::nullopt;
}

inline bool has_column(const Dataset& d, const std::string& column) {
  auto eq = [&](const std::string& n) { return lower(n) == lower(column); };
  return (d.modality_column && eq(*d.modality_column)) ||
         std::any_of(d.covariate_names.begin(), d.covariate_names.end(), eq) ||
         std::any_of(d.attribute_names.begin(), d.attribute_names.end(), eq);
}

}  // namespace detail

inline ValidationReport validate_dataset(const Dataset& d, const ModelSpec& spec) {
  ValidationReport rep;
  auto add = [&](std::string s) { rep.findings.push_back(std::move(s)); };
  if (spec.model_type < 1 || spec.model_type > 4) add("model type must be 1, 2, 3 or 4");
  for (double q : spec.quantiles)
    if (!(q > 0 && q < 1)) add("quantile outside (0,1): " + detail::format_real(q));
  if (spec.nsample <= 0) add("nsample must be positive");
  if (d.studies.empty()) add("dataset contains no studies");

  std::set<std::string> names;
  for (auto& s : d.studies) {
    if (!names.insert(s.studyname).second) add("duplicate study name " + s.studyname);
    if (s.tp < 0 || s.fp < 0 || s.tn < 0 || s.fn < 0) add(s.studyname + ": negative count");
    if (s.diseased() < 1) add(s.studyname + ": no diseased subjects (TP+FN=0)");
    if (s.healthy() < 1) add(s.studyname + ": no non-diseased subjects (TN+FP=0)");
    if (s.covariates.size() != d.covariate_names.size()) add(s.studyname + ": covariate set differs");
    if (d.modality_column.has_value() != s.modality.has_value()) add(s.studyname + ": modality presence differs");
  }
  if (spec.modality_column && !detail::has_column(d, *spec.modality_column))
    add("modality column absent: " + *spec.modality_column);
  for (auto& c : spec.covariate_columns) {
    if (std::none_of(d.covariate_names.begin(), d.covariate_names.end(),
                     [&](const std::string& n) { return lower(n) == lower(c); }))
      add("covariate column absent or non-numeric: " + c);
    if (spec.modality_column && lower(*spec.modality_column) == lower(c))
      add("column " + c + " used both as modality and covariate");
  }
  return rep;
}

// ---------------------------------------------------------------------------
// design

/// Observation vector, fixed-effect design and random-effect pairing for the
/// bivariate binomial-normal model. Rows interleave: row 2i is the first
/// accuracy measure of study i, row 2i+1 the second. Latent field layout is
/// [fixed effects (p) | phi_0, psi_0, phi_1, psi_1, ...].
struct DesignBundle {
  int model_type = 1;
  Link link = Link::logit;
  Eigen::VectorXd successes;
  Eigen::VectorXd trials;
  Eigen::MatrixXd fixed_design;
  std::vector<std::string> fixed_effect_names;
  std::vector<std::string> study_names;
  std::vector<std::string> levels;  // sanitized modality levels; empty without modality
  std::vector<int> study_level;     // level index per study (0 without modality)
  std::vector<std::string> covariate_names;
  std::pair<Measure, Measure> first_row_is{Measure::sens, Measure::spec};

  int n_studies() const { return static_cast<int>(study_names.size()); }
  int n_fixed() const { return static_cast<int>(fixed_design.cols()); }
  int latent_dim() const { return n_fixed() + 2 * n_studies(); }
  int n_levels() const { return std::max<int>(1, static_cast<int>(levels.size())); }
  bool has_covariates() const { return !covariate_names.empty(); }

  /// Latent indices of (phi_i, psi_i).
  std::pair<int, int> pairing(int study) const { return {n_fixed() + 2 * study, n_fixed() + 2 * study + 1}; }
  int mu_index(int level = 0) const { return level; }
  int nu_index(int level = 0) const { return n_levels() + level; }

  std::string level_label(int level) const { return levels.empty() ? std::string() : levels[level]; }

  /// Full (2I x latent_dim) map from latent field to linear predictors.
  Eigen::MatrixXd full_design() const {
    const int I = n_studies(), p = n_fixed();
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(2 * I, p + 2 * I);
    A.leftCols(p) = fixed_design;
    for (int r = 0; r < 2 * I; ++r) A(r, p + r) = 1.0;
    return A;
  }
};

inline DesignBundle build_design(const Dataset& d, const ModelSpec& spec) {
  const auto report = validate_dataset(d, spec);
  if (!report.ok()) throw ValidationError(report.findings.front());

  DesignBundle b;
  b.model_type = spec.model_type;
  b.link = spec.link;
  b.first_row_is = measures_for(spec.model_type);
  const int I = static_cast<int>(d.studies.size());

  std::vector<std::string> raw_levels;
  b.study_level.assign(I, 0);
  if (spec.modality_column) {
    for (int i = 0; i < I; ++i) {
      const auto lab = detail::study_label(d.studies[i], d, *spec.modality_column);
      if (!lab) throw ValidationError("modality column absent: " + *spec.modality_column);
      auto it = std::find(raw_levels.begin(), raw_levels.end(), *lab);
      if (it == raw_levels.end()) {
        raw_levels.push_back(*lab);
        it = raw_levels.end() - 1;
      }
      b.study_level[i] = static_cast<int>(it - raw_levels.begin());
    }
    for (auto& l : raw_levels) b.levels.push_back(sanitize_level(l));
  }

  std::vector<std::size_t> cov_index;
  for (auto& c : spec.covariate_columns) {
    auto it = std::find_if(d.covariate_names.begin(), d.covariate_names.end(),
                           [&](const std::string& n) { return lower(n) == lower(c); });
    if (it == d.covariate_names.end()) throw ValidationError("unknown covariate " + c);
    cov_index.push_back(static_cast<std::size_t>(it - d.covariate_names.begin()));
    b.covariate_names.push_back(*it);
  }

  const int L = b.n_levels();
  const int C = static_cast<int>(cov_index.size());
  const int p = 2 * L + 2 * C;
  b.fixed_design = Eigen::MatrixXd::Zero(2 * I, p);
  b.successes.resize(2 * I);
  b.trials.resize(2 * I);

  auto level_name = [&](const char* stem, int l) {
    return b.levels.empty() ? std::string(stem) : std::string(stem) + "." + b.levels[l];
  };
  for (int l = 0; l < L; ++l) b.fixed_effect_names.push_back(level_name("mu", l));
  for (int l = 0; l < L; ++l) b.fixed_effect_names.push_back(level_name("nu", l));
  for (auto& c : b.covariate_names) b.fixed_effect_names.push_back("alpha." + c);
  for (auto& c : b.covariate_names) b.fixed_effect_names.push_back("beta." + c);

  for (int i = 0; i < I; ++i) {
    const auto& s = d.studies[i];
    b.study_names.push_back(s.studyname);
    const double n1 = static_cast<double>(s.diseased()), n2 = static_cast<double>(s.healthy());
    double y1 = 0, y2 = 0;
    switch (spec.model_type) {
      case 1: y1 = s.tp; y2 = s.tn; break;
      case 2: y1 = s.tp; y2 = s.fp; break;
      case 3: y1 = s.fn; y2 = s.tn; break;
      case 4: y1 = s.fn; y2 = s.fp; break;
    }
    b.successes[2 * i] = y1;
    b.successes[2 * i + 1] = y2;
    b.trials[2 * i] = n1;
    b.trials[2 * i + 1] = n2;
    const int l = b.study_level[i];
    b.fixed_design(2 * i, l) = 1.0;
    b.fixed_design(2 * i + 1, L + l) = 1.0;
    for (int c = 0; c < C; ++c) {
      const double v = s.covariates[cov_index[c]].second;
      b.fixed_design(2 * i, 2 * L + c) = v;
      b.fixed_design(2 * i + 1, 2 * L + C + c) = v;
    }
  }
  return b;
}

}  // namespace diagmeta
