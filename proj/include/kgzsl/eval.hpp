#pragma once

#include "kgzsl/classifier.hpp"
#include "kgzsl/common.hpp"
#include "kgzsl/dataset.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

// Per-class Hit@k, macro averaging, and the GZSL harmonic-mean summary.
// Percentages live in [0, 100]; file rendering is fixed at two decimals.

namespace kgzsl {

struct EvalReport {
  Mode mode = Mode::kZsl;
  std::vector<int> ks;
  std::map<int, std::map<std::string, double>> per_class_hit;  // k -> class -> percent
  std::map<int, double> macro;                                 // k -> percent
  double h_seen = 0.0;    // GZSL per-class Hit@1 macro over seen classes
  double h_unseen = 0.0;  // over unseen classes
  double h = 0.0;         // harmonic mean
  std::map<std::string, Index> class_counts;
  std::vector<std::string> excluded;  // candidate classes with zero test rows
  std::string config_digest;
};

// Per-class percentage of rows whose top-k ranked labels contain the truth.
// Candidate classes without any test row are reported back through
// `excluded` rather than silently scored zero.
std::map<std::string, double> per_class_hit_at_k(
    const std::vector<std::vector<std::string>>& ranked, const std::vector<std::string>& truths,
    int k, const std::vector<std::string>& candidates, std::vector<std::string>* excluded);

// Unweighted arithmetic mean; every class counts once regardless of rows.
double macro_average(const std::vector<double>& per_class_values);

// 2ab / (a + b), defined as 0 at (0, 0).
double harmonic_mean(double h_seen, double h_unseen);

EvalReport make_report(const DatasetSplit& split, const SoftmaxClassifier& clf,
                       std::vector<int> ks, const std::string& config_digest);

// One `key<TAB>value` line per metric, key-sorted, percentages at two
// decimals; parse_report inverts it exactly.
std::string report_to_text(const EvalReport& report);
EvalReport parse_report(std::istream& in, const std::string& source);
void save_report(const EvalReport& report, const std::filesystem::path& path);
EvalReport load_report(const std::filesystem::path& path);

// Machine-readable mirror of the same keys.
std::string report_to_json(const EvalReport& report);

}  // namespace kgzsl
