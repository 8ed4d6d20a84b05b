#pragma once

// Shared datasets, reference values and configurations for the test suites.

#include <array>
#include <map>
#include <string>
#include <vector>

#include "diagmeta/builtin.hpp"
#include "diagmeta/inference.hpp"
#include "diagmeta/json_io.hpp"

namespace fixtures {

using namespace diagmeta;

// Telomerase call: PC(3, 0.05) on both standard deviations, Normal(0, 5) on
// the Fisher-z scale, 10000 samples.
inline PriorSpec telomerase_priors() {
  PriorSpec p;
  p.var_prior = "PC";
  p.var_par = {3.0, 0.05};
  p.var2_prior = "PC";
  p.cor_prior = "Normal";
  p.cor_par = {0.0, 5.0};
  return p;
}

inline FitRequest telomerase_request(int nsample = 10000, std::uint64_t seed = 1) {
  FitRequest r;
  r.data = builtin::telomerase();
  r.spec.nsample = nsample;
  r.spec.seed = seed;
  r.priors = telomerase_priors();
  return r;
}

struct PaperRow {
  const char* study;
  double tpr_mean;
  double dor_median;
};

// Published fitted() tables for the Telomerase call.
inline const std::vector<PaperRow>& telomerase_table() {
  static const std::vector<PaperRow> rows{
      {"Ito_1998", 0.740, 51.707},       {"Rahat_1998", 0.792, 15.924},     {"Kavaler_1998", 0.827, 9.613},
      {"Yoshida_1997", 0.692, 60.082},   {"Ramakumar_1999", 0.688, 149.894}, {"Landman_1998", 0.794, 16.256},
      {"Kinoshita_1997", 0.623, 130.997}, {"Gelmini_2000", 0.779, 28.289},   {"Cheng_2000", 0.770, 30.989},
      {"Cassel_2001", 0.852, 2.410}};
  return rows;
}

struct Target {
  const char* what;
  double value;
  double tol;
};

inline const std::vector<Target>& telomerase_summary_targets() {
  static const std::vector<Target> t{{"mean(mu)", 1.179, 0.05},     {"mean(nu)", 2.180, 0.10},
                                     {"sd(mu)", 0.198, 0.03},       {"mean(var_phi)", 0.244, 0.05},
                                     {"mean(var_psi)", 3.647, 0.50}, {"mean(rho)", -0.819, 0.08},
                                     {"mean(Se)", 0.763, 0.02},     {"mean(Sp)", 0.887, 0.03},
                                     {"corr(mu,nu)", -0.5504, 0.08}, {"mlik", -65.05, 1.0}};
  return t;
}

/// The quantity named by a Target, read off a fit.
inline double summary_value(const FitResult& f, const std::string& what) {
  if (what == "mean(mu)") return f.fixed_marginal("mu").mean();
  if (what == "mean(nu)") return f.fixed_marginal("nu").mean();
  if (what == "sd(mu)") return f.fixed_marginal("mu").sd();
  if (what == "mean(var_phi)") return f.hyper_marginal("var1").mean();
  if (what == "mean(var_psi)") return f.hyper_marginal("var2").mean();
  if (what == "mean(rho)") return f.hyper_marginal("rho").mean();
  if (what == "mean(Se)") return summary_points(f).at(0).se.mean;
  if (what == "mean(Sp)") return summary_points(f).at(0).sp.mean;
  if (what == "corr(mu,nu)") return f.mu_nu_correlation.at(0).value;
  if (what == "mlik") return f.mlik;
  throw std::invalid_argument(what);
}

// Printed six-row heads plus synthetic rows (marked syn_) so that every
// modality level of the full analyses is present.
inline Dataset scheidler_all_levels() {
  std::string csv(builtin::find("scheidler-head").csv);
  csv += "syn_LAG_1,LAG,20,8,6,30\n"
         "syn_LAG_2,LAG,15,6,7,25\n"
         "syn_MRI_1,MRI,9,2,7,40\n"
         "syn_MRI_2,MRI,11,1,6,35\n";
  IngestOptions io;
  io.modality_column = "modality";
  return parse_dataset(csv, io);
}

inline Dataset catheter_all_levels() {
  std::string csv(builtin::find("catheter-head").csv);
  csv += "syn_Q_1,Quantitative,8.1,9,12,150,3\n"
         "syn_Q_2,Quantitative,15.0,14,20,90,2\n"
         "syn_Q_3,Quantitative,5.5,6,9,200,1\n";
  IngestOptions io;
  io.modality_column = "type";
  return parse_dataset(csv, io);
}

inline PriorSpec catheter_priors() {
  PriorSpec p;
  p.var_prior = "PC";
  p.var_par = {3.0, 0.05};
  p.var2_prior = "PC";
  p.cor_prior = "PC";
  p.cor_par = {1.0, -0.1, 0.5, -0.95, 0.05, std::nullopt, std::nullopt};
  return p;
}

}  // namespace fixtures
