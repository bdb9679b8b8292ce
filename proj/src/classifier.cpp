#include "kgzsl/classifier.hpp"

#include "kgzsl/kg.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace kgzsl {

SoftmaxClassifier make_softmax_classifier(std::vector<std::string> labels, MatXd theta) {
  if (static_cast<Index>(labels.size()) != theta.rows())
    throw StructuralError("classifier needs one theta row per label");
  SoftmaxClassifier clf;
  clf.labels = std::move(labels);
  clf.theta = std::move(theta);
  for (Index i = 0; i < clf.label_count(); ++i)
    if (!clf.label_index.emplace(clf.labels[static_cast<std::size_t>(i)], i).second)
      throw ValidationError("duplicate label '" + clf.labels[static_cast<std::size_t>(i)] + "'");
  return clf;
}

AssembledTrainingSet assemble_training_set(Mode mode, const FeatureSet& real_seen,
                                           const FeatureSet& synthetic_unseen) {
  if (synthetic_unseen.rows() == 0)
    throw UsageError("training-set assembly requires synthetic unseen features");
  AssembledTrainingSet out;
  if (mode == Mode::kGzsl) {
    if (real_seen.rows() == 0)
      throw UsageError("GZSL training-set assembly requires real seen features");
    out.features = real_seen;
    out.features.append(synthetic_unseen);
  } else {
    out.features = synthetic_unseen;
  }
  std::set<std::string> labels(out.features.labels.begin(), out.features.labels.end());
  out.label_set.assign(labels.begin(), labels.end());
  return out;
}

VecXd decision_scores(const SoftmaxClassifier& clf, const VecXd& x) {
  if (x.size() != clf.dim())
    throw StructuralError("feature dimension " + std::to_string(x.size()) +
                          " does not match classifier dimension " + std::to_string(clf.dim()));
  return clf.theta * x;
}

VecXd predict_proba(const SoftmaxClassifier& clf, const VecXd& x) {
  VecXd s = decision_scores(clf, x);
  const double m = s.maxCoeff();
  VecXd e = (s.array() - m).exp();
  return e / e.sum();
}

std::vector<std::string> predict_topk(const SoftmaxClassifier& clf, const VecXd& x, Index k) {
  if (k < 1 || k > clf.label_count())
    throw UsageError("top-k rank " + std::to_string(k) + " is outside [1, " +
                     std::to_string(clf.label_count()) + "]");
  VecXd s = decision_scores(clf, x);
  std::vector<Index> order(static_cast<std::size_t>(clf.label_count()));
  std::iota(order.begin(), order.end(), Index(0));
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    if (s(a) != s(b)) return s(a) > s(b);
    return a < b;
  });
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(k));
  for (Index i = 0; i < k; ++i)
    out.push_back(clf.labels[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]);
  return out;
}

void save_classifier(const SoftmaxClassifier& clf, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write classifier file '" + path.string() + "'");
  out << "softmax " << clf.label_count() << ' ' << clf.dim() << '\n';
  for (Index i = 0; i < clf.label_count(); ++i) {
    out << clf.labels[static_cast<std::size_t>(i)];
    for (Index c = 0; c < clf.dim(); ++c) out << '\t' << format_real(clf.theta(i, c));
    out << '\n';
  }
}

SoftmaxClassifier load_classifier(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open classifier file '" + path.string() + "'");
  const std::string source = path.filename().string();
  std::string line;
  if (!std::getline(in, line)) throw ParseError(source + ": empty classifier file");
  long labels = -1, dim = -1;
  {
    std::istringstream header(line);
    std::string tag;
    header >> tag >> labels >> dim;
    if (tag != "softmax" || labels < 0 || dim < 0)
      throw ParseError(source + ":1: expected header 'softmax <labels> <dim>'");
  }
  std::vector<std::string> names;
  MatXd theta(labels, dim);
  Index row = 0;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string name;
    if (!std::getline(fields, name, '\t'))
      throw ParseError(source + ":" + std::to_string(lineno) + ": missing label");
    if (row >= labels) throw ParseError(source + ": more rows than the header declares");
    names.push_back(name);
    std::string cell;
    for (Index c = 0; c < dim; ++c) {
      if (!std::getline(fields, cell, '\t'))
        throw ParseError(source + ":" + std::to_string(lineno) + ": missing value");
      double v = 0.0;
      auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || p != cell.data() + cell.size())
        throw ParseError(source + ":" + std::to_string(lineno) + ": malformed real '" + cell + "'");
      theta(row, c) = v;
    }
    ++row;
  }
  if (row != labels)
    throw ParseError(source + ": header declares " + std::to_string(labels) + " rows, found " +
                     std::to_string(row));
  return make_softmax_classifier(std::move(names), std::move(theta));
}

}  // namespace kgzsl
