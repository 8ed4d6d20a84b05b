#pragma once

// JSON representations of datasets, configurations, fit results, tables and
// plot geometry. Numbers are rounded to 6 significant digits; key order is
// fixed so identical inputs give identical bytes.

#include <array>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "diagmeta/accuracy.hpp"
#include "diagmeta/plots.hpp"

namespace diagmeta {

using Json = nlohmann::ordered_json;

inline double round6(double v) {
  if (!std::isfinite(v) || v == 0) return v;
  char b[32];
  std::snprintf(b, sizeof b, "%.6g", v);
  return std::stod(b);
}

/// NaN/inf are not representable in JSON; they become null.
inline Json jnum(double v) { return std::isfinite(v) ? Json(round6(v)) : Json(nullptr); }

inline std::string quantile_key(double p) {
  char b[32];
  std::snprintf(b, sizeof b, "%gquant", p);
  return b;
}

// ---------------------------------------------------------------------------
// dataset

inline Json to_json(const Dataset& d) {
  Json j;
  if (d.modality_column) j["modality_column"] = *d.modality_column;
  Json studies = Json::array();
  for (auto& s : d.studies) {
    Json r;
    r["studyname"] = s.studyname;
    r["TP"] = s.tp;
    r["FP"] = s.fp;
    r["TN"] = s.tn;
    r["FN"] = s.fn;
    if (s.modality) r["modality"] = *s.modality;
    Json cov = Json::object();
    for (auto& [n, v] : s.covariates) cov[n] = v;  // exact, not rounded: data
    r["covariates"] = cov;
    if (!s.attributes.empty()) {
      Json at = Json::object();
      for (auto& [n, v] : s.attributes) at[n] = v;
      r["attributes"] = at;
    }
    studies.push_back(r);
  }
  j["studies"] = studies;
  return j;
}

inline Dataset dataset_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("studies") || !j["studies"].is_array())
    throw ValidationError("dataset JSON needs a 'studies' array");
  Dataset d;
  if (j.contains("modality_column") && !j["modality_column"].is_null())
    d.modality_column = j["modality_column"].get<std::string>();
  std::set<std::string> names;
  int idx = 0;
  for (auto& r : j["studies"]) {
    ++idx;
    StudyRecord s;
    s.studyname = r.contains("studyname") ? r["studyname"].get<std::string>() : "study_" + std::to_string(idx);
    auto count = [&](const char* k) {
      if (!r.contains(k) || !r[k].is_number_integer()) throw ValidationError(std::string("dataset JSON: study ") + s.studyname + " needs an integer " + k);
      const long long v = r[k].get<long long>();
      if (v < 0) throw ValidationError(std::string("negative count in column ") + k);
      return v;
    };
    s.tp = count("TP");
    s.fp = count("FP");
    s.tn = count("TN");
    s.fn = count("FN");
    if (r.contains("modality") && !r["modality"].is_null()) {
      s.modality = r["modality"].get<std::string>();
      if (std::find(d.modality_levels.begin(), d.modality_levels.end(), *s.modality) == d.modality_levels.end())
        d.modality_levels.push_back(*s.modality);
    }
    if (r.contains("covariates"))
      for (auto& [k, v] : r["covariates"].items()) {
        if (!v.is_number()) throw ValidationError("missing covariate value in column " + k);
        s.covariates.emplace_back(k, v.get<double>());
      }
    if (r.contains("attributes"))
      for (auto& [k, v] : r["attributes"].items()) s.attributes.emplace_back(k, v.get<std::string>());
    if (!names.insert(s.studyname).second) throw ValidationError("duplicate study name " + s.studyname);
    d.studies.push_back(std::move(s));
  }
  if (!d.studies.empty()) {
    for (auto& [n, v] : d.studies.front().covariates) d.covariate_names.push_back(n);
    for (auto& [n, v] : d.studies.front().attributes) d.attribute_names.push_back(n);
  }
  return d;
}

// ---------------------------------------------------------------------------
// model spec and priors

inline Json to_json(const ModelSpec& s) {
  Json j;
  j["model_type"] = s.model_type;
  j["link"] = to_string(s.link);
  j["modality"] = s.modality_column ? Json(*s.modality_column) : Json(nullptr);
  j["covariates"] = s.covariate_columns;
  j["quantiles"] = s.quantiles;
  j["nsample"] = s.nsample;
  j["seed"] = s.seed;
  return j;
}

inline ModelSpec model_spec_from_json(const Json& j) {
  ModelSpec s;
  try {
    if (j.contains("model_type")) s.model_type = j["model_type"].get<int>();
    if (j.contains("link")) s.link = parse_link(j["link"].get<std::string>());
    if (j.contains("modality") && !j["modality"].is_null()) s.modality_column = j["modality"].get<std::string>();
    if (j.contains("covariates")) s.covariate_columns = j["covariates"].get<std::vector<std::string>>();
    if (j.contains("quantiles")) s.quantiles = j["quantiles"].get<std::vector<double>>();
    if (j.contains("nsample")) s.nsample = j["nsample"].get<int>();
    if (j.contains("seed")) s.seed = j["seed"].get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("model specification: ") + e.what());
  }
  if (s.model_type < 1 || s.model_type > 4) throw ValidationError("model type must be 1, 2, 3 or 4");
  for (double q : s.quantiles)
    if (!(q > 0 && q < 1)) throw ValidationError("quantile outside (0,1): " + detail::format_real(q));
  if (s.nsample <= 0) throw ValidationError("nsample must be positive");
  return s;
}

inline Json params_to_json(const ParamVector& p) {
  Json a = Json::array();
  for (auto& v : p) a.push_back(v ? Json(*v) : Json(nullptr));
  return a;
}

inline ParamVector params_from_json(const Json& j, const std::string& what) {
  ParamVector p;
  if (!j.is_array()) throw ValidationError(what + " must be an array");
  for (auto& v : j) {
    if (v.is_null()) p.push_back(std::nullopt);
    else if (v.is_number()) p.push_back(v.get<double>());
    else if (v.is_string() && (v.get<std::string>() == "NA" || v.get<std::string>() == "_")) p.push_back(std::nullopt);
    else throw ValidationError(what + ": entries must be numbers or null");
  }
  return p;
}

inline Json to_json(const PriorSpec& p) {
  Json j;
  j["var.prior"] = p.var_prior;
  j["var.par"] = params_to_json(p.var_par);
  if (p.var2_prior) j["var2.prior"] = *p.var2_prior;
  if (!p.var2_par.empty()) j["var2.par"] = params_to_json(p.var2_par);
  j["cor.prior"] = p.cor_prior;
  j["cor.par"] = params_to_json(p.cor_par);
  if (p.uses_wishart()) j["wishart.par"] = params_to_json(p.wishart_par);
  return j;
}

inline PriorSpec prior_spec_from_json(const Json& j) {
  PriorSpec p;
  if (!j.is_object()) throw ValidationError("prior configuration must be a JSON object");
  auto str = [&](const char* k) { return j[k].get<std::string>(); };
  // parameters default only while the family is the default one
  if (j.contains("var.prior")) {
    if (lower(str("var.prior")) != lower(p.var_prior)) p.var_par = {};
    p.var_prior = str("var.prior");
  }
  if (j.contains("var.par")) p.var_par = params_from_json(j["var.par"], "var.par");
  if (j.contains("var2.prior")) p.var2_prior = str("var2.prior");
  if (j.contains("var2.par")) p.var2_par = params_from_json(j["var2.par"], "var2.par");
  if (j.contains("cor.prior")) {
    if (lower(str("cor.prior")) != lower(p.cor_prior)) p.cor_par = {};
    p.cor_prior = str("cor.prior");
  }
  if (j.contains("cor.par")) p.cor_par = params_from_json(j["cor.par"], "cor.par");
  if (j.contains("wishart.par")) p.wishart_par = params_from_json(j["wishart.par"], "wishart.par");
  return p;
}

// ---------------------------------------------------------------------------
// fit request: everything needed to reproduce a fit

struct FitRequest {
  Dataset data;
  ModelSpec spec;
  PriorSpec priors;
  FitOptions options;
};

inline FitResult run_fit(const FitRequest& r) { return fit(r.data, r.spec, r.priors.build(), r.options); }

inline Json options_to_json(const FitOptions& o) {
  Json j;
  j["grid_dz"] = o.grid.dz;
  j["grid_drop"] = o.grid.drop;
  j["fixed_prior_variance"] = o.fixed_prior_variance;
  j["latent_strategy"] = o.strategy == LatentStrategy::laplace ? "laplace" : "gaussian";
  j["second_order_evidence"] = o.second_order_evidence;
  return j;
}

inline FitOptions options_from_json(const Json& j) {
  FitOptions o;
  if (j.contains("grid_dz")) o.grid.dz = j["grid_dz"].get<double>();
  if (j.contains("grid_drop")) o.grid.drop = j["grid_drop"].get<double>();
  if (j.contains("fixed_prior_variance")) o.fixed_prior_variance = j["fixed_prior_variance"].get<double>();
  if (j.contains("latent_strategy")) {
    const auto s = lower(j["latent_strategy"].get<std::string>());
    if (s == "laplace") o.strategy = LatentStrategy::laplace;
    else if (s == "gaussian") o.strategy = LatentStrategy::gaussian;
    else throw ValidationError("latent_strategy must be gaussian or laplace");
  }
  if (j.contains("second_order_evidence")) o.second_order_evidence = j["second_order_evidence"].get<bool>();
  if (!(o.grid.dz > 0) || !(o.grid.drop > 0)) throw ValidationError("grid_dz and grid_drop must be > 0");
  return o;
}

inline Json to_json(const FitRequest& r) {
  Json j;
  j["dataset"] = to_json(r.data);
  j["model"] = to_json(r.spec);
  j["priors"] = to_json(r.priors);
  j["options"] = options_to_json(r.options);
  return j;
}

inline FitRequest fit_request_from_json(const Json& j) {
  FitRequest r;
  if (!j.contains("dataset")) throw ValidationError("fit inputs need a dataset");
  r.data = dataset_from_json(j["dataset"]);
  if (j.contains("model")) r.spec = model_spec_from_json(j["model"]);
  if (j.contains("priors")) r.priors = prior_spec_from_json(j["priors"]);
  if (j.contains("options")) r.options = options_from_json(j["options"]);
  return r;
}

// ---------------------------------------------------------------------------
// results

inline Json marginal_to_json(const Marginal& m, const std::vector<double>& probs) {
  Json j;
  j["name"] = m.name();
  j["mean"] = jnum(m.mean());
  j["sd"] = jnum(m.sd());
  Json q;
  for (double p : probs) q[quantile_key(p)] = jnum(m.quantile(p));
  j["quantiles"] = q;
  return j;
}

inline Json summary_to_json(const SampleSummary& s, const std::vector<double>& probs) {
  Json j;
  j["mean"] = jnum(s.mean);
  j["sd"] = jnum(s.sd);
  Json q;
  for (std::size_t i = 0; i < probs.size(); ++i) q[quantile_key(probs[i])] = jnum(s.quantiles[i]);
  j["quantiles"] = q;
  return j;
}

inline const char* hyper_label(const std::string& name) {
  if (name == "var1") return "var_phi";
  if (name == "var2") return "var_psi";
  return "cor";
}

inline Json fit_to_json(const FitResult& f, const FitRequest& inputs) {
  const auto probs = f.spec.all_quantiles();
  Json j;
  j["format"] = "diagmeta-fit/1";
  j["status"] = "done";
  j["inputs"] = to_json(inputs);
  j["latent_dim"] = f.design.latent_dim();
  j["grid_size"] = f.grid.points.size();
  Json fixed = Json::array();
  for (auto& m : f.fixed) fixed.push_back(marginal_to_json(m, probs));
  j["fixed"] = fixed;
  Json hyper = Json::array();
  for (auto& m : f.hyper) {
    auto h = marginal_to_json(m, probs);
    h["label"] = hyper_label(m.name());
    hyper.push_back(h);
  }
  j["hyper"] = hyper;
  Json sp = Json::array();
  if (f.samples)
    for (auto& s : summary_points(f, probs)) {
      Json e;
      e["level"] = s.level;
      e["se"] = summary_to_json(s.se, probs);
      e["sp"] = summary_to_json(s.sp, probs);
      sp.push_back(e);
    }
  j["summary_points"] = sp;
  Json cor = Json::array();
  for (std::size_t l = 0; l < f.mu_nu_correlation.size(); ++l) {
    Json e;
    e["level"] = f.mu_nu_correlation[l].level;
    e["mu"] = f.design.fixed_effect_names[f.design.mu_index(static_cast<int>(l))];
    e["nu"] = f.design.fixed_effect_names[f.design.nu_index(static_cast<int>(l))];
    e["value"] = jnum(f.mu_nu_correlation[l].value);
    cor.push_back(e);
  }
  j["mu_nu_correlation"] = cor;
  j["mlik"] = jnum(f.mlik);
  j["nsample"] = f.samples ? f.samples->size() : 0;
  j["seed"] = f.spec.seed;
  Json names = Json::array();
  for (auto& n : f.design.fixed_effect_names) names.push_back(n);
  for (auto& n : hyper_names()) names.push_back(n);
  j["marginal_names"] = names;
  if (f.options.record_timings) {
    Json t;
    t["pre"] = jnum(f.timings.pre);
    t["run"] = jnum(f.timings.run);
    t["post"] = jnum(f.timings.post);
    t["total"] = jnum(f.timings.total());
    j["timings"] = t;
  }
  return j;
}

inline Json to_json(const StudyAccuracyTable& t) {
  Json j;
  j["accuracy_type"] = to_string(t.type);
  Json rows = Json::array();
  for (auto& r : t.rows) {
    Json e;
    e["studyname"] = r.studyname;
    auto s = summary_to_json(r.summary, t.probs);
    e["mean"] = s["mean"];
    e["sd"] = s["sd"];
    e["quantiles"] = s["quantiles"];
    rows.push_back(e);
  }
  j["rows"] = rows;
  return j;
}

inline Json to_json(const PriorTable& t, const std::string& scale) {
  Json j;
  j["scale"] = scale;
  Json pts = Json::array();
  for (std::size_t i = 0; i < t.x.size(); ++i) pts.push_back(Json::array({jnum(t.x[i]), jnum(t.density[i])}));
  j["points"] = pts;
  return j;
}

inline Json to_json(const CurveGeometry& g) {
  Json j;
  j["kind"] = to_string(g.kind);
  if (!g.label.empty()) j["label"] = g.label;
  Json pts = Json::array();
  for (auto& p : g.points) pts.push_back(Json::array({jnum(p.x), jnum(p.y)}));
  j["points"] = pts;
  j["closed"] = g.closed;
  Json st;
  st["stroke"] = g.style.stroke;
  st["fill"] = g.style.fill;
  st["width"] = jnum(g.style.width);
  if (!g.style.dash.empty()) st["dash"] = g.style.dash;
  st["radius"] = jnum(g.style.radius);
  j["style"] = st;
  return j;
}

inline Json to_json(const std::vector<CurveGeometry>& gs) {
  Json a = Json::array();
  for (auto& g : gs) a.push_back(to_json(g));
  return a;
}

inline Json to_json(const ForestGeometry& g) {
  Json j;
  j["kind"] = "forest";
  j["accuracy_type"] = to_string(g.type);
  j["est_type"] = g.est_type;
  j["intervals"] = Json::array({g.interval_lo, g.interval_hi});
  j["cut"] = Json::array({jnum(g.cut_lo), jnum(g.cut_hi)});
  Json parts = Json::array();
  for (auto& p : g.partitions) {
    Json pj;
    pj["level"] = p.level;
    Json rows = Json::array();
    for (auto& r : p.rows) {
      Json e;
      e["label"] = r.label;
      if (!r.counts.empty()) e["counts"] = r.counts;
      e["estimate"] = jnum(r.estimate);
      e["lo"] = jnum(r.lo);
      e["hi"] = jnum(r.hi);
      e["raw_lo"] = jnum(r.raw_lo);
      e["raw_hi"] = jnum(r.raw_hi);
      e["marker"] = jnum(r.marker);
      e["summary"] = r.summary;
      rows.push_back(e);
    }
    pj["rows"] = rows;
    parts.push_back(pj);
  }
  j["partitions"] = parts;
  return j;
}

// ---------------------------------------------------------------------------
// prior preview

struct PreviewRequest {
  PriorSpec priors;
  std::string which = "var";  // var, var2 or cor
  std::optional<std::array<double, 3>> grid;  // lo, hi, n
};

inline Json prior_preview(const PreviewRequest& r) {
  const auto which = lower(r.which);
  if (which != "var" && which != "var2" && which != "cor") throw ValidationError("which must be var, var2 or cor");
  if (r.priors.uses_wishart()) throw ValidationError("no univariate preview for the inverse Wishart prior");
  auto grid = [&](double lo, double hi) {
    if (!r.grid) return linspace(lo, hi, 401);
    const auto& g = *r.grid;
    if (!(g[2] >= 2 && g[2] <= 100000) || !(g[0] < g[1])) throw ValidationError("grid needs lo < hi and 2 <= n <= 100000");
    return linspace(g[0], g[1], static_cast<std::size_t>(g[2]));
  };
  if (which == "cor") {
    const auto p = make_correlation_prior(r.priors.cor_prior, r.priors.cor_par);
    return to_json(tabulate_prior(p, grid(-0.999, 0.999)), "correlation");
  }
  const auto cfg = r.priors.build();
  const auto& p = which == "var2" ? cfg.var2 : cfg.var1;
  const auto [lo, hi] = p.native_range();
  return to_json(tabulate_prior(p, grid(lo, hi)), p.scale() == NativeScale::sd ? "sd" : "variance");
}

}  // namespace diagmeta
