#pragma once

// Bundled example datasets. Telomerase is complete; Scheidler and Catheter
// are the six-row heads only and are meant for ingestion and naming checks.

#include <string>
#include <string_view>
#include <vector>

#include "diagmeta/data.hpp"

namespace diagmeta::builtin {

inline constexpr std::string_view kTelomerase =
    "studynames,TP,FP,TN,FN\n"
    "Ito_1998,25,1,25,8\n"
    "Rahat_1998,17,3,11,4\n"
    "Kavaler_1998,88,16,31,16\n"
    "Yoshida_1997,16,3,80,10\n"
    "Ramakumar_1999,40,1,137,17\n"
    "Landman_1998,38,6,24,9\n"
    "Kinoshita_1997,23,0,12,19\n"
    "Gelmini_2000,27,2,18,6\n"
    "Cheng_2000,14,3,29,3\n"
    "Cassel_2001,37,22,7,7\n";

inline constexpr std::string_view kScheidlerHead =
    "studynames,modality,TP,FP,FN,TN\n"
    "Grumbine_1981,CT,0,1,6,17\n"
    "Walsh_1981,CT,12,3,3,7\n"
    "Brenner_1982,CT,4,1,2,13\n"
    "Villasanta_1983,CT,10,4,3,25\n"
    "vanEngelshoven_1984,CT,3,1,4,12\n"
    "Bandy_1985,CT,9,3,3,29\n";

inline constexpr std::string_view kCatheterHead =
    "studynames,type,prevalence,TP,FP,TN,FN\n"
    "Cooper_1985,Semi-quantitative,3.6,12,29,289,0\n"
    "Gutierrez_1992,Semi-quantitative,12.2,10,14,72,2\n"
    "Cercenado_1990,Semi-quantitative,12.9,17,36,85,1\n"
    "Rello_1991,Semi-quantitative,13.2,13,18,67,0\n"
    "Maki_1977,Semi-quantitative,1.6,4,21,225,0\n"
    "Aufwerber_1991,Semi-quantitative,3.1,15,122,403,2\n";

struct BuiltinDataset {
  std::string name;
  std::string_view csv;
  std::string description;
  IngestOptions options;
};

inline const std::vector<BuiltinDataset>& all() {
  static const std::vector<BuiltinDataset> sets{
      {"telomerase", kTelomerase, "Telomerase marker for bladder cancer, 10 studies", {}},
      {"scheidler-head", kScheidlerHead, "Scheidler imaging meta-analysis, first 6 rows (CT)", {"modality"}},
      {"catheter-head", kCatheterHead, "Catheter segment culture, first 6 rows", {"type"}},
  };
  return sets;
}

inline const BuiltinDataset& find(std::string_view name) {
  for (auto& b : all())
    if (b.name == lower(std::string(name))) return b;
  throw ValidationError("unknown builtin dataset " + std::string(name));
}

inline Dataset load(std::string_view name) {
  const auto& b = find(name);
  return parse_dataset(b.csv, b.options);
}

inline Dataset telomerase() { return load("telomerase"); }

}  // namespace diagmeta::builtin
