#pragma once

#include "kgzsl/autodiff.hpp"
#include "kgzsl/common.hpp"
#include "kgzsl/embedding.hpp"
#include "kgzsl/kg.hpp"
#include "kgzsl/optim.hpp"
#include "kgzsl/rng.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

// Two-view graph auto-encoder: one GCN encoder per view, inner-product
// decoder over each view's own link set, trained as independent
// auto-encoders. The class embedding of a class node is its class-view
// latent followed by its attribute-view latent.

namespace kgzsl {

enum class ViewSelection { kBoth, kClassOnly, kAttributeOnly };

struct GaeConfig {
  int layers = 2;
  Index dim_c = 50;
  Index dim_a = 50;
  double learning_rate = 0.001;
  int epochs = 400;
  NegativePolicy negatives;
  ViewSelection views = ViewSelection::kBoth;
  std::uint64_t seed = 0;

  void validate() const {
    if (layers < 1) throw ConfigError("gae: layers must be positive");
    if (dim_c <= 0 || dim_a <= 0) throw ConfigError("gae: output dimensions must be positive");
    if (learning_rate <= 0) throw ConfigError("gae: learning rate must be positive");
    if (epochs < 0) throw ConfigError("gae: epochs must be non-negative");
  }
};

template <class Scalar>
struct GcnLayer {
  MatX<Scalar> weight;  // out x in, applied to the neighborhood mean
  MatX<Scalar> bias;    // out x in, applied to the node's own vector
  bool relu_act = false;
};

template <class Scalar>
using GcnStack = std::vector<GcnLayer<Scalar>>;

// Hidden layers activate with relu, the output layer is linear.
template <class Scalar>
GcnStack<Scalar> init_gcn_stack(Index in_dim, Index out_dim, int layers, SeededRng& rng) {
  GcnStack<Scalar> stack;
  Index prev = in_dim;
  for (int k = 0; k < layers; ++k) {
    GcnLayer<Scalar> layer;
    layer.weight = rng.xavier_matrix(out_dim, prev).template cast<Scalar>();
    layer.bias = rng.xavier_matrix(out_dim, prev).template cast<Scalar>();
    layer.relu_act = k + 1 < layers;
    stack.push_back(std::move(layer));
    prev = out_dim;
  }
  return stack;
}

// One graph-convolution step over the view's neighbor lists:
//   out_i = act(W . mean_{j in N_i} prev_j + B . prev_i)
// with a zero mean term for isolated nodes.
template <class Scalar>
MatX<Scalar> gcn_layer(const MatX<Scalar>& prev, const GraphView& view,
                       const GcnLayer<Scalar>& layer) {
  if (prev.rows() != view.node_count())
    throw StructuralError("gcn_layer: input covers " + std::to_string(prev.rows()) +
                          " nodes, view has " + std::to_string(view.node_count()));
  if (layer.weight.cols() != prev.cols() || layer.bias.cols() != prev.cols())
    throw StructuralError("gcn_layer: input dimension " + std::to_string(prev.cols()) +
                          " does not match layer weight columns " +
                          std::to_string(layer.weight.cols()));
  MatX<Scalar> out(prev.rows(), layer.weight.rows());
  for (Index i = 0; i < prev.rows(); ++i) {
    const auto& adj = view.neighbors[static_cast<std::size_t>(i)];
    Eigen::RowVector<Scalar, Eigen::Dynamic> agg =
        Eigen::RowVector<Scalar, Eigen::Dynamic>::Zero(prev.cols());
    for (Index j : adj) agg += prev.row(j);
    if (!adj.empty()) agg /= static_cast<Scalar>(adj.size());
    out.row(i) = agg * layer.weight.transpose() + prev.row(i) * layer.bias.transpose();
  }
  if (layer.relu_act) out = out.cwiseMax(Scalar(0));
  return out;
}

template <class Scalar>
MatX<Scalar> encode_view(const GraphView& view, const MatX<Scalar>& inputs,
                         const GcnStack<Scalar>& stack) {
  MatX<Scalar> h = inputs;
  for (const auto& layer : stack) h = gcn_layer(h, view, layer);
  return h;
}

// Initial node representations for a view. The attribute view mixes two
// node kinds; when their name-vector dimensions differ the shorter kind is
// zero-padded so one weight matrix serves the whole view.
template <class Scalar>
MatX<Scalar> view_inputs(const GraphView& view, const NameVectors& class_vectors,
                         const NameVectors& attribute_vectors) {
  const Index dim = view.kind == ViewKind::kClassView
                        ? class_vectors.dim
                        : std::max(class_vectors.dim, attribute_vectors.dim);
  MatX<Scalar> h = MatX<Scalar>::Zero(view.node_count(), dim);
  for (Index i = 0; i < view.node_count(); ++i) {
    const bool is_class = i < view.class_count;
    const auto& source = is_class ? class_vectors : attribute_vectors;
    const VecXd& v = source.at(view.nodes[static_cast<std::size_t>(i)]);
    h.row(i).head(v.size()) = v.transpose().template cast<Scalar>();
  }
  return h;
}

template <class Scalar>
struct GaeParams {
  GcnStack<Scalar> class_stack;
  GcnStack<Scalar> attribute_stack;
};

// Latent class embeddings from both views: (g^c, g^a), one row per class.
template <class Scalar>
std::pair<MatX<Scalar>, MatX<Scalar>> encode(const KnowledgeGraph& kg,
                                             const NameVectors& class_vectors,
                                             const NameVectors& attribute_vectors,
                                             const GaeParams<Scalar>& params) {
  auto [class_view, attribute_view] = extract_views(kg);
  MatX<Scalar> gc =
      encode_view(class_view, view_inputs<Scalar>(class_view, class_vectors, attribute_vectors),
                  params.class_stack);
  MatX<Scalar> ga_all = encode_view(
      attribute_view, view_inputs<Scalar>(attribute_view, class_vectors, attribute_vectors),
      params.attribute_stack);
  return {std::move(gc), ga_all.topRows(kg.num_classes())};
}

// [g^c; g^a]
template <class Scalar>
VecX<Scalar> concat_embedding(const VecX<Scalar>& gc, const VecX<Scalar>& ga) {
  VecX<Scalar> out(gc.size() + ga.size());
  out.head(gc.size()) = gc;
  out.tail(ga.size()) = ga;
  return out;
}

namespace detail {

// Stable log(sigmoid(x)).
template <class Scalar>
Scalar log_sigmoid_value(Scalar x) {
  return x >= Scalar(0) ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

}  // namespace detail

inline constexpr double kScoreClamp = 30.0;

// Eq.-4 style decoder loss over one view's latents:
//   L = -sum_{(i,j) in pos} log s(z_i . z_j) - w sum_{(i,j') in neg} log s(-z_i . z_j')
// Inner products are clamped to +-30 before the log-sigmoid.
template <class Scalar>
Scalar reconstruction_loss(const MatX<Scalar>& latents, const DecoderEdgeSets& sets) {
  if (sets.positives.empty()) throw UsageError("reconstruction loss needs at least one positive pair");
  auto clamped_dot = [&](Index i, Index j) {
    const Scalar s = latents.row(i).dot(latents.row(j));
    return std::clamp(s, Scalar(-kScoreClamp), Scalar(kScoreClamp));
  };
  Scalar loss = Scalar(0);
  for (const auto& [i, j] : sets.positives) loss -= detail::log_sigmoid_value(clamped_dot(i, j));
  Scalar neg_sum = Scalar(0);
  for (const auto& [i, j] : sets.negatives) neg_sum += detail::log_sigmoid_value(-clamped_dot(i, j));
  return loss - static_cast<Scalar>(sets.weight) * neg_sum;
}

struct GaeTrainingLog {
  std::vector<double> class_view_loss;
  std::vector<double> attribute_view_loss;
};

template <class Scalar>
MatX<Scalar> row_normalized_adjacency(const GraphView& view) {
  MatX<Scalar> a = MatX<Scalar>::Zero(view.node_count(), view.node_count());
  for (Index i = 0; i < view.node_count(); ++i) {
    const auto& adj = view.neighbors[static_cast<std::size_t>(i)];
    if (adj.empty()) continue;
    const Scalar v = Scalar(1) / static_cast<Scalar>(adj.size());
    for (Index j : adj) a(i, j) = v;
  }
  return a;
}

// Differentiable encoder + decoder loss over one view, with parameter
// placeholders named after the stack layers.
template <class Scalar>
struct ViewLossGraph {
  std::unique_ptr<ad::Graph<Scalar>> graph;
  ad::Expr<Scalar> latents;
  ad::Expr<Scalar> loss;
  std::vector<std::string> param_names;        // sorted
  std::vector<ad::Expr<Scalar>> param_nodes;   // aligned with param_names
  std::vector<ad::Expr<Scalar>> param_grads;   // aligned with param_names
  ad::ParameterSet<Scalar> params;             // initial values
};

template <class Scalar>
ViewLossGraph<Scalar> build_view_loss(const GraphView& view, const MatXd& inputs,
                                      const GcnStack<Scalar>& stack, const DecoderEdgeSets& sets,
                                      const std::string& tag) {
  ViewLossGraph<Scalar> vg;
  vg.graph = std::make_unique<ad::Graph<Scalar>>();
  auto& g = *vg.graph;

  std::map<std::string, ad::Expr<Scalar>> nodes_by_name;
  std::vector<std::pair<ad::Expr<Scalar>, ad::Expr<Scalar>>> layer_nodes;
  for (std::size_t k = 0; k < stack.size(); ++k) {
    const std::string base = tag + ".layer" + std::to_string(k);
    vg.params.insert(base + ".w", stack[k].weight);
    vg.params.insert(base + ".b", stack[k].bias);
    auto w = g.placeholder(base + ".w", stack[k].weight.rows(), stack[k].weight.cols());
    auto b = g.placeholder(base + ".b", stack[k].bias.rows(), stack[k].bias.cols());
    nodes_by_name.emplace(base + ".w", w);
    nodes_by_name.emplace(base + ".b", b);
    layer_nodes.emplace_back(w, b);
  }

  auto h = g.constant(inputs.cast<Scalar>());
  auto a_hat = g.constant(row_normalized_adjacency<Scalar>(view));
  for (std::size_t k = 0; k < stack.size(); ++k) {
    auto [w, b] = layer_nodes[k];
    auto next = ad::add(ad::matmul(ad::matmul(a_hat, h), ad::transpose(w)),
                        ad::matmul(h, ad::transpose(b)));
    h = stack[k].relu_act ? ad::relu(next) : next;
  }
  vg.latents = h;

  auto pair_scores = [&](const std::vector<std::pair<Index, Index>>& pairs) {
    std::vector<Index> left, right;
    left.reserve(pairs.size());
    right.reserve(pairs.size());
    for (const auto& [i, j] : pairs) {
      left.push_back(i);
      right.push_back(j);
    }
    return ad::clamp(ad::dot_rows(ad::select_rows(h, left), ad::select_rows(h, right)),
                     Scalar(-kScoreClamp), Scalar(kScoreClamp));
  };
  auto pos_term = ad::neg(ad::sum_all(ad::log_sigmoid(pair_scores(sets.positives))));
  auto neg_term = ad::neg(ad::sum_all(ad::log_sigmoid(ad::neg(pair_scores(sets.negatives)))));
  vg.loss = ad::add(pos_term, ad::scale(neg_term, static_cast<Scalar>(sets.weight)));

  vg.param_names = vg.params.trainable_names();
  for (const auto& name : vg.param_names) vg.param_nodes.push_back(nodes_by_name.at(name));
  vg.param_grads =
      ad::gradients(vg.loss, std::span<const ad::Expr<Scalar>>(vg.param_nodes));
  return vg;
}

namespace detail {

template <class Scalar>
struct ViewTrainResult {
  MatXd latents;
  std::vector<double> epoch_loss;
};

// Trains one view's auto-encoder with adaptive-moment descent, full-batch
// over the view's decoder pair sets. `masked_pairs` are kept out of the
// negative set (held-out links must not be trained as non-links).
template <class Scalar>
ViewTrainResult<Scalar> train_view(const GraphView& view, const MatXd& inputs, Index out_dim,
                                   const GaeConfig& cfg, std::uint64_t seed, const char* view_tag,
                                   const std::vector<std::pair<Index, Index>>* masked_pairs =
                                       nullptr) {
  NegativePolicy policy = cfg.negatives;
  policy.seed = SeededRng::derive(seed, 1);
  auto sets = edge_sets_for_decoder(view, policy);
  if (masked_pairs != nullptr && !masked_pairs->empty()) {
    const std::set<std::pair<Index, Index>> masked(masked_pairs->begin(), masked_pairs->end());
    std::erase_if(sets.negatives, [&](const auto& p) { return masked.count(p) != 0; });
    sets.weight = sets.negatives.empty() ? 0.0
                                         : static_cast<double>(sets.positives.size()) /
                                               static_cast<double>(sets.negatives.size());
  }

  SeededRng init_rng(SeededRng::derive(seed, 2));
  auto stack = init_gcn_stack<Scalar>(inputs.cols(), out_dim, cfg.layers, init_rng);
  auto vg = build_view_loss<Scalar>(view, inputs, stack, sets, view_tag);
  auto& params = vg.params;

  AdamOptimizer<Scalar> adam(static_cast<Scalar>(cfg.learning_rate));
  ViewTrainResult<Scalar> result;
  result.epoch_loss.reserve(static_cast<std::size_t>(cfg.epochs));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    ad::Evaluator<Scalar> ev(*vg.graph);
    ev.bind(params);
    const double loss_value = static_cast<double>(ev.value(vg.loss)(0, 0));
    if (!std::isfinite(loss_value))
      throw TrainingError(std::string(view_tag) + ": loss diverged at epoch " +
                          std::to_string(epoch));
    result.epoch_loss.push_back(loss_value);
    std::map<std::string, MatX<Scalar>> grads;
    for (std::size_t i = 0; i < vg.param_names.size(); ++i)
      grads[vg.param_names[i]] = ev.value(vg.param_grads[i]);
    adam.step(params, grads);
  }

  ad::Evaluator<Scalar> ev(*vg.graph);
  ev.bind(params);
  result.latents = ev.value(vg.latents).template cast<double>();
  return result;
}

}  // namespace detail

// End-to-end embedding training. The two views train as independent
// auto-encoders (they share no parameters); a deselected view contributes a
// zero-dimensional block so downstream consumers see the declared layout.
template <class Scalar>
ClassEmbeddingTable train_gae(const KnowledgeGraph& kg, const NameVectors& class_vectors,
                              const NameVectors& attribute_vectors, const GaeConfig& cfg,
                              GaeTrainingLog* log = nullptr) {
  cfg.validate();
  auto [class_view, attribute_view] = extract_views(kg);
  const Index n = kg.num_classes();

  MatXd gc(n, 0), ga(n, 0);
  if (cfg.views != ViewSelection::kAttributeOnly) {
    auto r = detail::train_view<Scalar>(
        class_view, view_inputs<double>(class_view, class_vectors, attribute_vectors), cfg.dim_c,
        cfg, SeededRng::derive(cfg.seed, 0xC), "gc");
    gc = std::move(r.latents);
    if (log) log->class_view_loss = std::move(r.epoch_loss);
  }
  if (cfg.views != ViewSelection::kClassOnly) {
    auto r = detail::train_view<Scalar>(
        attribute_view, view_inputs<double>(attribute_view, class_vectors, attribute_vectors),
        cfg.dim_a, cfg, SeededRng::derive(cfg.seed, 0xA), "ga");
    ga = r.latents.topRows(n);
    if (log) log->attribute_view_loss = std::move(r.epoch_loss);
  }
  return make_embedding_table(kg.classes, std::move(gc), std::move(ga));
}

// ---- Held-out link prediction ----------------------------------------------

struct LinkPredictionAuc {
  double class_view = 0.0;
  double attribute_view = 0.0;
  double pooled = 0.0;
};

namespace detail {

inline GraphView with_edges(const GraphView& base, std::vector<std::pair<Index, Index>> edges) {
  GraphView v;
  v.kind = base.kind;
  v.nodes = base.nodes;
  v.class_count = base.class_count;
  v.edges = std::move(edges);
  std::sort(v.edges.begin(), v.edges.end());
  v.neighbors.assign(static_cast<std::size_t>(v.node_count()), {});
  for (const auto& [a, b] : v.edges) {
    v.neighbors[static_cast<std::size_t>(a)].push_back(b);
    v.neighbors[static_cast<std::size_t>(b)].push_back(a);
  }
  return v;
}

inline double ranking_auc(const std::vector<double>& pos, const std::vector<double>& neg) {
  double wins = 0.0;
  for (double p : pos)
    for (double q : neg) wins += p > q ? 1.0 : (p == q ? 0.5 : 0.0);
  return wins / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

// Holds out a fraction of one view's edges, trains on the rest, and scores
// the held-out links against an equal number of sampled non-links.
template <class Scalar>
std::pair<std::vector<double>, std::vector<double>> held_out_scores(
    const GraphView& view, const MatXd& inputs, Index out_dim, const GaeConfig& cfg,
    double holdout_fraction, std::uint64_t seed, const char* tag) {
  SeededRng rng(SeededRng::derive(seed, 3));
  auto order = rng.permutation(view.edges.size());
  const auto held = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::lround(holdout_fraction * static_cast<double>(view.edges.size()))),
      1, view.edges.size() - 1);
  std::vector<std::pair<Index, Index>> held_edges, train_edges;
  for (std::size_t i = 0; i < order.size(); ++i)
    (i < held ? held_edges : train_edges).push_back(view.edges[order[i]]);

  auto reduced = with_edges(view, train_edges);
  auto trained = train_view<Scalar>(reduced, inputs, out_dim, cfg, seed, tag, &held_edges);

  std::set<std::pair<Index, Index>> known(view.edges.begin(), view.edges.end());
  std::vector<std::pair<Index, Index>> negatives;
  const Index nc = view.class_count, n = view.node_count();
  while (negatives.size() < held_edges.size()) {
    Index a, b;
    if (view.kind == ViewKind::kClassView) {
      a = static_cast<Index>(rng.uniform_int(0, nc - 1));
      b = static_cast<Index>(rng.uniform_int(0, nc - 1));
      if (a == b) continue;
      if (a > b) std::swap(a, b);
    } else {
      a = static_cast<Index>(rng.uniform_int(0, nc - 1));
      b = nc + static_cast<Index>(rng.uniform_int(0, n - nc - 1));
    }
    if (known.count({a, b})) continue;
    negatives.emplace_back(a, b);
  }

  auto score = [&](const std::vector<std::pair<Index, Index>>& pairs) {
    std::vector<double> out;
    out.reserve(pairs.size());
    for (const auto& [i, j] : pairs) out.push_back(trained.latents.row(i).dot(trained.latents.row(j)));
    return out;
  };
  return {score(held_edges), score(negatives)};
}

}  // namespace detail

// Link-prediction quality of the auto-encoder at a given configuration:
// per-view AUC of held-out positives vs sampled negatives, plus the pooled
// AUC over both views' scored pairs.
template <class Scalar>
LinkPredictionAuc held_out_link_auc(const KnowledgeGraph& kg, const NameVectors& class_vectors,
                                    const NameVectors& attribute_vectors, const GaeConfig& cfg,
                                    double holdout_fraction, std::uint64_t seed) {
  auto [class_view, attribute_view] = extract_views(kg);
  auto [pos_c, neg_c] = detail::held_out_scores<Scalar>(
      class_view, view_inputs<double>(class_view, class_vectors, attribute_vectors), cfg.dim_c,
      cfg, holdout_fraction, SeededRng::derive(seed, 0xC), "gc");
  auto [pos_a, neg_a] = detail::held_out_scores<Scalar>(
      attribute_view, view_inputs<double>(attribute_view, class_vectors, attribute_vectors),
      cfg.dim_a, cfg, holdout_fraction, SeededRng::derive(seed, 0xA), "ga");

  LinkPredictionAuc auc;
  auc.class_view = detail::ranking_auc(pos_c, neg_c);
  auc.attribute_view = detail::ranking_auc(pos_a, neg_a);
  std::vector<double> pos = pos_c, neg = neg_c;
  pos.insert(pos.end(), pos_a.begin(), pos_a.end());
  neg.insert(neg.end(), neg_a.begin(), neg_a.end());
  auc.pooled = detail::ranking_auc(pos, neg);
  return auc;
}

}  // namespace kgzsl
