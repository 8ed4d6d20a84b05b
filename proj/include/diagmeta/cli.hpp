#pragma once

// Command-line front end. Subcommands share one flag set:
//   diagmeta fit --data telomerase.csv --var-prior pc --var-par 3,0.05 ...
// Exit codes: 0 success, 2 invalid input or usage, 1 numerical failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "diagmeta/builtin.hpp"
#include "diagmeta/json_io.hpp"
#include "diagmeta/report.hpp"
#include "diagmeta/svg.hpp"

namespace diagmeta {

struct CliConfig {
  std::string subcommand;
  std::string data_path, builtin_name, fit_path;
  int model_type = 1;
  std::string link = "logit";
  std::string modality;
  std::vector<std::string> covariates;
  std::string quantiles;
  int nsample = 5000;
  std::uint64_t seed = 1;
  int threads = 0;
  std::string var_prior, var_par, var2_prior, var2_par, cor_prior, cor_par, wishart_par;
  double grid_dz = 0.75, grid_drop = 2.5;
  std::string latent_strategy = "gaussian";
  bool first_order = false;
  bool timings = false;
  std::string out, output_dir = "diagmeta-plots", format = "text";
  std::string accuracy_type = "sens", est_type = "mean", intervals, cut;
  int sroc_type = 1;
  double level = 0.95;
  bool no_data = false, no_credible = false, no_prediction = false;
  std::string which = "var", grid;
  bool geometry = false;
};

namespace cli_detail {

inline std::vector<std::string> split(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(detail::trim(cur));
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

/// "3,0.05" or "3,-0.2,_,-0.8,0.1,0.8,0.1"; "_" and "NA" are missing.
inline ParamVector parse_params(const std::string& s, const std::string& what) {
  ParamVector p;
  if (s.empty()) return p;
  for (auto& t : split(s)) {
    if (t == "_" || t == "NA" || t == "na" || t.empty()) {
      p.push_back(std::nullopt);
      continue;
    }
    const auto v = detail::parse_real(t);
    if (!v) throw ValidationError(what + ": cannot parse '" + t + "' as a number");
    p.push_back(*v);
  }
  return p;
}

inline std::vector<double> parse_reals(const std::string& s, const std::string& what) {
  std::vector<double> out;
  for (auto& v : parse_params(s, what)) {
    if (!v) throw ValidationError(what + ": missing value");
    out.push_back(*v);
  }
  return out;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write file " + path.string());
  out << content;
}

inline int thread_count(int flag) {
  if (flag > 0) return flag;
  if (const char* env = std::getenv("DIAGMETA_THREADS")) {
    const auto v = detail::parse_integer(env);
    if (v && *v > 0) return static_cast<int>(*v);
  }
  return 1;
}

inline PriorSpec prior_spec(const CliConfig& c) {
  PriorSpec p;
  if (!c.var_prior.empty()) {
    if (lower(c.var_prior) != lower(p.var_prior)) p.var_par = {};
    p.var_prior = c.var_prior;
  }
  if (!c.var_par.empty()) p.var_par = parse_params(c.var_par, "--var-par");
  if (!c.var2_prior.empty()) p.var2_prior = c.var2_prior;
  if (!c.var2_par.empty()) p.var2_par = parse_params(c.var2_par, "--var2-par");
  if (!c.cor_prior.empty()) {
    if (lower(c.cor_prior) != lower(p.cor_prior)) p.cor_par = {};
    p.cor_prior = c.cor_prior;
  }
  if (!c.cor_par.empty()) p.cor_par = parse_params(c.cor_par, "--cor-par");
  if (!c.wishart_par.empty()) p.wishart_par = parse_params(c.wishart_par, "--wishart-par");
  return p;
}

inline FitRequest fit_request(const CliConfig& c) {
  if (!c.fit_path.empty()) {
    const auto j = Json::parse(read_file(c.fit_path), nullptr, false);
    if (j.is_discarded() || !j.contains("inputs")) throw ValidationError("not a saved fit: " + c.fit_path);
    return fit_request_from_json(j["inputs"]);
  }
  FitRequest r;
  IngestOptions io;
  if (!c.modality.empty()) io.modality_column = c.modality;
  if (!c.data_path.empty() && !c.builtin_name.empty()) throw ValidationError("give either --data or --builtin, not both");
  if (!c.data_path.empty()) {
    r.data = parse_dataset(read_file(c.data_path), io);
  } else if (!c.builtin_name.empty()) {
    const auto& b = builtin::find(c.builtin_name);
    r.data = parse_dataset(b.csv, c.modality.empty() ? b.options : io);
  } else {
    throw ValidationError("no data: use --data <csv>, --builtin <name> or --fit <json>");
  }
  r.spec.model_type = c.model_type;
  r.spec.link = parse_link(c.link);
  if (!c.modality.empty()) r.spec.modality_column = c.modality;
  r.spec.covariate_columns = c.covariates;
  if (!c.quantiles.empty()) r.spec.quantiles = parse_reals(c.quantiles, "--quantiles");
  r.spec.nsample = c.nsample;
  r.spec.seed = c.seed;
  r.priors = prior_spec(c);
  r.options.grid.dz = c.grid_dz;
  r.options.grid.drop = c.grid_drop;
  const auto ls = lower(c.latent_strategy);
  if (ls == "laplace") r.options.strategy = LatentStrategy::laplace;
  else if (ls != "gaussian") throw ValidationError("--latent-strategy must be gaussian or laplace");
  r.options.second_order_evidence = !c.first_order;
  r.options.record_timings = c.timings;
  const auto rep = validate_dataset(r.data, r.spec);
  if (!rep.ok()) throw ValidationError(rep.findings.front());
  return r;
}

inline std::pair<double, double> parse_pair(const std::string& s, const std::string& what) {
  const auto v = parse_reals(s, what);
  if (v.size() != 2) throw ValidationError(what + " needs two comma-separated numbers");
  return {v[0], v[1]};
}

inline void emit(const CliConfig& c, std::ostream& out, const std::string& content, const std::string& default_name) {
  if (c.out == "-") {
    out << content;
    return;
  }
  const std::filesystem::path p = c.out.empty() ? std::filesystem::path(c.output_dir) / default_name : std::filesystem::path(c.out);
  write_file(p, content);
  out << "wrote " << p.string() << '\n';
}

inline int prior_preview(const CliConfig& c, std::ostream& out) {
  PreviewRequest r;
  r.priors = prior_spec(c);
  r.which = c.which;
  if (!c.grid.empty()) {
    const auto v = parse_reals(c.grid, "--grid");
    if (v.size() != 3) throw ValidationError("--grid needs lo,hi,n");
    r.grid = std::array<double, 3>{v[0], v[1], v[2]};
  }
  const auto j = prior_preview(r);
  if (lower(c.format) == "json") {
    out << j.dump(2) << '\n';
    return 0;
  }
  out << j["scale"].get<std::string>() << ",density\n";
  for (auto& p : j["points"]) out << p[0].dump() << ',' << p[1].dump() << '\n';
  return 0;
}

inline int dispatch(const CliConfig& c, std::ostream& out) {
  const auto& cmd = c.subcommand;
  if (cmd == "datasets") {
    if (!c.builtin_name.empty()) {
      out << builtin::find(c.builtin_name).csv;
      return 0;
    }
    for (auto& b : builtin::all()) out << b.name << '\t' << b.description << '\n';
    return 0;
  }
  if (cmd == "prior-preview") return prior_preview(c, out);

  const auto req = fit_request(c);
  auto opts = req.options;
  opts.threads = thread_count(c.threads);
  FitRequest run = req;
  run.options = opts;
  const auto f = run_fit(run);

  if (cmd == "fit") {
    const auto js = fit_to_json(f, req).dump(2) + "\n";
    if (c.out.empty() || c.out == "-") {
      out << js;
    } else {
      write_file(c.out, js);
      out << format_summary(f, c.timings);
    }
    return 0;
  }
  if (cmd == "summary") {
    out << format_summary(f, c.timings);
    return 0;
  }
  if (cmd == "fitted") {
    const auto t = fitted_study_measures(f, parse_accuracy_type(c.accuracy_type));
    const auto fmt = lower(c.format);
    if (fmt == "json") out << to_json(t).dump(2) << '\n';
    else if (fmt == "csv") out << fitted_csv(t);
    else out << format_fitted(t);
    return 0;
  }
  if (cmd == "forest") {
    ForestOptions o;
    o.type = parse_accuracy_type(c.accuracy_type);
    o.est_type = c.est_type;
    if (!c.intervals.empty()) std::tie(o.interval_lo, o.interval_hi) = parse_pair(c.intervals, "--intervals");
    if (!c.cut.empty()) o.cut = parse_pair(c.cut, "--cut");
    const auto g = forest_layout(f, o);
    if (c.geometry) emit(c, out, to_json(g).dump(2) + "\n", "forest.json");
    else emit(c, out, render_svg(g), "forest.svg");
    return 0;
  }
  if (cmd == "sroc") {
    SrocPlotOptions o;
    o.sroc_type = c.sroc_type;
    o.show_data = !c.no_data;
    o.show_credible = !c.no_credible;
    o.show_prediction = !c.no_prediction;
    o.level = c.level;
    const auto g = sroc_plot(f, o);
    if (c.geometry) emit(c, out, to_json(g).dump(2) + "\n", "sroc.json");
    else emit(c, out, render_svg(g), "sroc.svg");
    return 0;
  }
  if (cmd == "crosshair") {
    CrosshairOptions o;
    o.est_type = c.est_type;
    if (!c.intervals.empty()) std::tie(o.interval_lo, o.interval_hi) = parse_pair(c.intervals, "--intervals");
    const auto g = crosshair_layout(f, o);
    if (c.geometry) emit(c, out, to_json(g).dump(2) + "\n", "crosshair.json");
    else emit(c, out, render_svg(g), "crosshair.svg");
    return 0;
  }
  throw ValidationError("unknown subcommand " + cmd);
}

}  // namespace cli_detail

inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CliConfig c;
  CLI::App app{"Bayesian bivariate meta-analysis of diagnostic test accuracy studies", "diagmeta"};
  app.require_subcommand(1);
  for (const char* name : {"fit", "summary", "fitted", "forest", "sroc", "crosshair", "prior-preview", "datasets"}) {
    static const std::map<std::string, std::string> help{
        {"fit", "fit the model; JSON to stdout, or to --out with the summary on stdout"},
        {"summary", "print the summary block"},
        {"fitted", "per-study accuracy table (--accuracy-type)"},
        {"forest", "forest plot SVG (or --geometry JSON)"},
        {"sroc", "SROC plot SVG (or --geometry JSON)"},
        {"crosshair", "crosshair plot SVG (or --geometry JSON)"},
        {"prior-preview", "density table of a prior"},
        {"datasets", "list bundled datasets; --builtin NAME prints one"}};
    app.add_subcommand(name, help.at(name))->fallthrough()->callback([&c, n = std::string(name)] { c.subcommand = n; });
  }
  app.add_option("--data", c.data_path, "CSV file with TP, FP, TN, FN columns");
  app.add_option("--builtin", c.builtin_name, "bundled dataset (telomerase, scheidler-head, catheter-head)");
  app.add_option("--fit", c.fit_path, "saved fit JSON; its inputs are refitted deterministically");
  app.add_option("--model-type", c.model_type, "1 (Se,Sp), 2 (Se,1-Sp), 3 (1-Se,Sp), 4 (1-Se,1-Sp)")->check(CLI::Range(1, 4));
  app.add_option("--link", c.link, "logit, probit or cloglog");
  app.add_option("--modality", c.modality, "categorical covariate column");
  app.add_option("--covariates", c.covariates, "continuous covariate columns")->delimiter(',');
  app.add_option("--quantiles", c.quantiles, "extra posterior quantiles, comma separated");
  app.add_option("--nsample", c.nsample, "posterior samples for accuracy measures")->check(CLI::Range(1, std::numeric_limits<int>::max()).description(" (positive)"));
  app.add_option("--seed", c.seed, "random seed");
  app.add_option("--threads", c.threads, "worker threads (default $DIAGMETA_THREADS or 1)");
  app.add_option("--var-prior", c.var_prior, "PC, Tnormal, Hcauchy, Unif, Invgamma, Table or Invwishart");
  app.add_option("--var-par", c.var_par, "variance prior parameters, comma separated");
  app.add_option("--var2-prior", c.var2_prior, "prior of the second variance (default: as --var-prior)");
  app.add_option("--var2-par", c.var2_par, "second variance prior parameters");
  app.add_option("--cor-prior", c.cor_prior, "PC, Normal, Beta, Table or Invwishart");
  app.add_option("--cor-par", c.cor_par, "correlation prior parameters; PC: strategy,rho0,omega,u1,a1,u2,a2 with _ for missing");
  app.add_option("--wishart-par", c.wishart_par, "nu,R11,R22,R12 for the inverse Wishart prior");
  app.add_option("--grid-dz", c.grid_dz, "hyperparameter grid step in standard deviations");
  app.add_option("--grid-drop", c.grid_drop, "log-density drop bounding the grid");
  app.add_option("--latent-strategy", c.latent_strategy, "gaussian (default) or laplace fixed-effect marginals");
  app.add_flag("--first-order-evidence", c.first_order, "plain Laplace log p(y | theta), without the second-order term");
  app.add_flag("--timings", c.timings, "include wall-clock timings in outputs");
  app.add_option("--out", c.out, "output file ('-' for stdout)");
  app.add_option("--output-dir", c.output_dir, "directory for plot files (default ./diagmeta-plots)");
  app.add_option("--format", c.format, "text, csv or json");
  app.add_option("--accuracy-type", c.accuracy_type, "sens, spec, TPR, TNR, FPR, FNR, LRpos, LRneg, RD, DOR, LLRpos, LLRneg, LDOR");
  app.add_option("--est-type", c.est_type, "mean or median");
  app.add_option("--intervals", c.intervals, "interval probabilities lo,hi (must be among the quantiles)");
  app.add_option("--cut", c.cut, "forest axis range min,max");
  app.add_option("--sroc-type", c.sroc_type, "SROC formulation 1..5")->check(CLI::Range(1, 5));
  app.add_option("--level", c.level, "region probability level");
  app.add_flag("--no-data", c.no_data, "hide study bubbles");
  app.add_flag("--no-credible", c.no_credible, "hide the credible region");
  app.add_flag("--no-prediction", c.no_prediction, "hide the prediction region");
  app.add_option("--which", c.which, "prior-preview target: var, var2 or cor");
  app.add_option("--grid", c.grid, "prior-preview grid lo,hi,n");
  app.add_flag("--geometry", c.geometry, "write plot geometry JSON instead of SVG");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  try {
    return cli_detail::dispatch(c, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const NumericError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

inline int run_cli(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return run_cli(std::vector<std::string>(argv + 1, argv + argc), out, err);
}

}  // namespace diagmeta
