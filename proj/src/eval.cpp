#include "kgzsl/eval.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace kgzsl {

namespace {

std::string two_decimals(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

std::map<std::string, double> per_class_hit_at_k(
    const std::vector<std::vector<std::string>>& ranked, const std::vector<std::string>& truths,
    int k, const std::vector<std::string>& candidates, std::vector<std::string>* excluded) {
  if (ranked.size() != truths.size())
    throw UsageError("hit@k: one ranking per test row required");
  if (k < 1) throw UsageError("hit@k: k must be positive");

  std::map<std::string, Index> rows, hits;
  for (std::size_t r = 0; r < truths.size(); ++r) {
    if (ranked[r].size() < static_cast<std::size_t>(k))
      throw UsageError("hit@k: row " + std::to_string(r) + " has fewer than k ranked labels");
    ++rows[truths[r]];
    const auto end = ranked[r].begin() + k;
    if (std::find(ranked[r].begin(), end, truths[r]) != end) ++hits[truths[r]];
  }

  std::map<std::string, double> out;
  for (const auto& c : candidates) {
    auto it = rows.find(c);
    if (it == rows.end()) {
      if (excluded) excluded->push_back(c);
      continue;
    }
    out[c] = 100.0 * static_cast<double>(hits[c]) / static_cast<double>(it->second);
  }
  return out;
}

double macro_average(const std::vector<double>& per_class_values) {
  if (per_class_values.empty()) throw UsageError("macro average of an empty class list");
  double total = 0.0;
  for (double v : per_class_values) total += v;
  return total / static_cast<double>(per_class_values.size());
}

double harmonic_mean(double h_seen, double h_unseen) {
  if (h_seen == 0.0 && h_unseen == 0.0) return 0.0;
  return 2.0 * h_seen * h_unseen / (h_seen + h_unseen);
}

EvalReport make_report(const DatasetSplit& split, const SoftmaxClassifier& clf,
                       std::vector<int> ks, const std::string& config_digest) {
  split.validate();
  const auto candidates = split.candidate_labels();
  if (clf.labels != candidates)
    throw ValidationError("classifier label set does not match the split's candidate labels");

  if (ks.empty()) ks = split.mode == Mode::kZsl ? std::vector<int>{1, 2, 5} : std::vector<int>{1};
  if (split.mode == Mode::kGzsl &&
      std::find(ks.begin(), ks.end(), 1) == ks.end())
    ks.insert(ks.begin(), 1);
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  const int kmax = ks.back();
  if (kmax > clf.label_count())
    throw UsageError("hit@" + std::to_string(kmax) + " exceeds the candidate label count");

  EvalReport report;
  report.mode = split.mode;
  report.ks = ks;
  report.config_digest = config_digest;

  std::vector<std::vector<std::string>> ranked;
  ranked.reserve(static_cast<std::size_t>(split.test.rows()));
  for (Index r = 0; r < split.test.rows(); ++r)
    ranked.push_back(predict_topk(clf, split.test.x.row(r).transpose(), kmax));

  for (const auto& label : split.test.labels) ++report.class_counts[label];

  bool first = true;
  for (int k : ks) {
    std::vector<std::string>* excl = first ? &report.excluded : nullptr;
    report.per_class_hit[k] =
        per_class_hit_at_k(ranked, split.test.labels, k, candidates, excl);
    first = false;
    std::vector<double> values;
    values.reserve(report.per_class_hit[k].size());
    for (const auto& [cls, v] : report.per_class_hit[k]) values.push_back(v);
    report.macro[k] = macro_average(values);
  }

  if (split.mode == Mode::kGzsl) {
    std::vector<double> seen_vals, unseen_vals;
    for (const auto& [cls, v] : report.per_class_hit.at(1)) {
      if (split.labels.is_seen(cls))
        seen_vals.push_back(v);
      else
        unseen_vals.push_back(v);
    }
    report.h_seen = seen_vals.empty() ? 0.0 : macro_average(seen_vals);
    report.h_unseen = unseen_vals.empty() ? 0.0 : macro_average(unseen_vals);
    report.h = harmonic_mean(report.h_seen, report.h_unseen);
  }
  return report;
}

std::string report_to_text(const EvalReport& report) {
  std::map<std::string, std::string> lines;
  lines["config_digest"] = report.config_digest;
  lines["mode"] = mode_name(report.mode);
  {
    std::ostringstream os;
    for (std::size_t i = 0; i < report.ks.size(); ++i) {
      if (i) os << ',';
      os << report.ks[i];
    }
    lines["ks"] = os.str();
  }
  for (const auto& [cls, n] : report.class_counts)
    lines["count." + cls] = std::to_string(n);
  for (const auto& cls : report.excluded) lines["excluded." + cls] = "1";
  for (const auto& [k, per_class] : report.per_class_hit) {
    for (const auto& [cls, v] : per_class)
      lines["hit@" + std::to_string(k) + "." + cls] = two_decimals(v);
    lines["hit@" + std::to_string(k) + ".macro"] = two_decimals(report.macro.at(k));
  }
  if (report.mode == Mode::kGzsl) {
    lines["H"] = two_decimals(report.h);
    lines["H_s"] = two_decimals(report.h_seen);
    lines["H_u"] = two_decimals(report.h_unseen);
  }

  std::ostringstream os;
  for (const auto& [key, value] : lines) os << key << '\t' << value << '\n';
  return os.str();
}

EvalReport parse_report(std::istream& in, const std::string& source) {
  EvalReport report;
  std::string line;
  std::size_t lineno = 0;
  std::set<std::string> excluded;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw ParseError(source + ":" + std::to_string(lineno) + ": expected key<TAB>value");
    const std::string key = line.substr(0, tab);
    const std::string value = line.substr(tab + 1);
    auto as_double = [&]() {
      double v = 0.0;
      auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
      if (ec != std::errc() || p != value.data() + value.size())
        throw ParseError(source + ":" + std::to_string(lineno) + ": malformed number");
      return v;
    };
    if (key == "config_digest") {
      report.config_digest = value;
    } else if (key == "mode") {
      report.mode = mode_from_name(value);
    } else if (key == "ks") {
      std::istringstream ksin(value);
      std::string tok;
      while (std::getline(ksin, tok, ',')) report.ks.push_back(std::stoi(tok));
    } else if (key.rfind("count.", 0) == 0) {
      report.class_counts[key.substr(6)] = static_cast<Index>(std::stol(value));
    } else if (key.rfind("excluded.", 0) == 0) {
      excluded.insert(key.substr(9));
    } else if (key == "H") {
      report.h = as_double();
    } else if (key == "H_s") {
      report.h_seen = as_double();
    } else if (key == "H_u") {
      report.h_unseen = as_double();
    } else if (key.rfind("hit@", 0) == 0) {
      const auto dot = key.find('.', 4);
      if (dot == std::string::npos)
        throw ParseError(source + ":" + std::to_string(lineno) + ": malformed hit key");
      const int k = std::stoi(key.substr(4, dot - 4));
      const std::string cls = key.substr(dot + 1);
      if (cls == "macro")
        report.macro[k] = as_double();
      else
        report.per_class_hit[k][cls] = as_double();
    } else {
      throw ParseError(source + ":" + std::to_string(lineno) + ": unknown report key '" + key +
                       "'");
    }
  }
  report.excluded.assign(excluded.begin(), excluded.end());
  return report;
}

void save_report(const EvalReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write report '" + path.string() + "'");
  out << report_to_text(report);
}

EvalReport load_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open report '" + path.string() + "'");
  return parse_report(in, path.filename().string());
}

std::string report_to_json(const EvalReport& report) {
  nlohmann::json j;
  j["config_digest"] = report.config_digest;
  j["mode"] = mode_name(report.mode);
  j["ks"] = report.ks;
  for (const auto& [cls, n] : report.class_counts) j["count"][cls] = n;
  for (const auto& cls : report.excluded) j["excluded"].push_back(cls);
  for (const auto& [k, per_class] : report.per_class_hit) {
    auto& block = j["hit@" + std::to_string(k)];
    for (const auto& [cls, v] : per_class) block[cls] = std::stod(two_decimals(v));
    block["macro"] = std::stod(two_decimals(report.macro.at(k)));
  }
  if (report.mode == Mode::kGzsl) {
    j["H"] = std::stod(two_decimals(report.h));
    j["H_s"] = std::stod(two_decimals(report.h_seen));
    j["H_u"] = std::stod(two_decimals(report.h_unseen));
  }
  return j.dump(2) + "\n";
}

}  // namespace kgzsl
