#pragma once

#include "kgzsl/autodiff.hpp"
#include "kgzsl/common.hpp"
#include "kgzsl/dataset.hpp"
#include "kgzsl/features.hpp"
#include "kgzsl/optim.hpp"

#include <algorithm>
#include <filesystem>
#include <map>
#include <memory>
#include <numeric>
#include <set>
#include <string>
#include <vector>

// Linear softmax classification over raw features, P(y|x) proportional to
// exp(theta_y . x), with label-ordered deterministic tie-breaking.

namespace kgzsl {

struct SoftmaxHyper {
  double learning_rate = 0.05;
  int epochs = 400;
  enum class Optimizer { kAdam, kGd } optimizer = Optimizer::kAdam;
  std::uint64_t seed = 0;  // accepted for interface symmetry; training is full-batch

  void validate() const {
    if (learning_rate <= 0) throw ConfigError("classifier: learning rate must be positive");
    if (epochs < 0) throw ConfigError("classifier: epochs must be non-negative");
  }
};

struct SoftmaxClassifier {
  std::vector<std::string> labels;  // sorted; row i of theta scores labels[i]
  std::map<std::string, Index> label_index;
  MatXd theta;  // |labels| x dim

  Index dim() const { return theta.cols(); }
  Index label_count() const { return static_cast<Index>(labels.size()); }
};

SoftmaxClassifier make_softmax_classifier(std::vector<std::string> labels, MatXd theta);

// Training set and label set per the prediction mode: ZSL trains on the
// synthetic unseen features alone, GZSL on real seen plus synthetic unseen.
struct AssembledTrainingSet {
  FeatureSet features;
  std::vector<std::string> label_set;  // sorted
};

AssembledTrainingSet assemble_training_set(Mode mode, const FeatureSet& real_seen,
                                           const FeatureSet& synthetic_unseen);

// Mean negative log-likelihood of the labels under a row-wise softmax of
// X theta^T, as a differentiable graph over the theta placeholder.
template <class Scalar>
struct SoftmaxLossGraph {
  std::unique_ptr<ad::Graph<Scalar>> graph;
  ad::Expr<Scalar> theta;
  ad::Expr<Scalar> loss;
  ad::Expr<Scalar> grad;
};

template <class Scalar>
SoftmaxLossGraph<Scalar> build_softmax_loss(const MatXd& x, const std::vector<Index>& y,
                                            Index label_count) {
  if (static_cast<Index>(y.size()) != x.rows())
    throw UsageError("softmax loss: one label per feature row required");
  SoftmaxLossGraph<Scalar> lg;
  lg.graph = std::make_unique<ad::Graph<Scalar>>();
  auto& g = *lg.graph;

  MatX<Scalar> onehot = MatX<Scalar>::Zero(x.rows(), label_count);
  for (Index r = 0; r < x.rows(); ++r) onehot(r, y[static_cast<std::size_t>(r)]) = Scalar(1);

  lg.theta = g.placeholder("theta", label_count, x.cols());
  auto scores = ad::matmul(g.constant(x.cast<Scalar>()), ad::transpose(lg.theta));
  auto picked = ad::cwise_mul(ad::log_softmax_rows(scores), g.constant(std::move(onehot)));
  lg.loss = ad::scale(ad::neg(ad::sum_all(picked)), Scalar(1) / static_cast<Scalar>(x.rows()));
  lg.grad = ad::gradient(lg.loss, lg.theta);
  return lg;
}

// Minimizes the Eq.-style mean NLL from a zero-initialized weight matrix;
// deterministic (full-batch, fixed label order).
template <class Scalar>
SoftmaxClassifier train_softmax(const FeatureSet& data, const std::vector<std::string>& label_set,
                                const SoftmaxHyper& hyper,
                                std::vector<double>* loss_log = nullptr) {
  hyper.validate();
  data.validate();
  if (label_set.size() < 2) throw UsageError("softmax training needs at least two labels");
  if (!std::is_sorted(label_set.begin(), label_set.end()))
    throw UsageError("softmax label set must be sorted");
  {
    const std::set<std::string> present(data.labels.begin(), data.labels.end());
    if (present.size() < 2)
      throw UsageError("softmax training needs rows from at least two labels");
  }

  std::map<std::string, Index> index;
  for (Index i = 0; i < static_cast<Index>(label_set.size()); ++i)
    index[label_set[static_cast<std::size_t>(i)]] = i;
  std::vector<Index> y;
  y.reserve(static_cast<std::size_t>(data.rows()));
  for (const auto& l : data.labels) {
    auto it = index.find(l);
    if (it == index.end()) throw UsageError("row label '" + l + "' is outside the label set");
    y.push_back(it->second);
  }

  auto lg = build_softmax_loss<Scalar>(data.x, y, static_cast<Index>(label_set.size()));
  ad::ParameterSet<Scalar> params;
  params.insert("theta",
                MatX<Scalar>::Zero(static_cast<Index>(label_set.size()), data.dim()));

  AdamOptimizer<Scalar> adam(static_cast<Scalar>(hyper.learning_rate));
  SgdOptimizer<Scalar> sgd(static_cast<Scalar>(hyper.learning_rate));
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    ad::Evaluator<Scalar> ev(*lg.graph);
    ev.bind(params);
    const double loss = static_cast<double>(ev.value(lg.loss)(0, 0));
    if (!std::isfinite(loss))
      throw TrainingError("softmax: loss diverged at epoch " + std::to_string(epoch));
    if (loss_log) loss_log->push_back(loss);
    std::map<std::string, MatX<Scalar>> grads{{"theta", ev.value(lg.grad)}};
    if (hyper.optimizer == SoftmaxHyper::Optimizer::kAdam)
      adam.step(params, grads);
    else
      sgd.step(params, grads);
  }
  return make_softmax_classifier(label_set, params.at("theta").template cast<double>());
}

VecXd decision_scores(const SoftmaxClassifier& clf, const VecXd& x);
VecXd predict_proba(const SoftmaxClassifier& clf, const VecXd& x);

// Labels ordered by decreasing score; ties break toward the smaller label
// index so degenerate scores rank deterministically.
std::vector<std::string> predict_topk(const SoftmaxClassifier& clf, const VecXd& x, Index k);

void save_classifier(const SoftmaxClassifier& clf, const std::filesystem::path& path);
SoftmaxClassifier load_classifier(const std::filesystem::path& path);

}  // namespace kgzsl
