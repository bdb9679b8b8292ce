#pragma once

#include "kgzsl/autodiff.hpp"
#include "kgzsl/classifier.hpp"
#include "kgzsl/common.hpp"
#include "kgzsl/embedding.hpp"
#include "kgzsl/features.hpp"
#include "kgzsl/optim.hpp"
#include "kgzsl/rng.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

// Conditional Wasserstein GAN with gradient penalty. The generator maps
// noise plus a class embedding to a non-negative feature vector; the critic
// scores a feature under the same conditioning (symmetric for real and
// synthesized inputs) and emits one unbounded scalar. A frozen linear
// softmax over the seen classes supplies the classification term of the
// generator loss.

namespace kgzsl {

struct GanConfig {
  Index noise_dim = 100;
  Index feature_dim = 2048;
  Index generator_hidden = 4096;
  Index discriminator_hidden = 4096;
  double lambda_cls = 0.01;  // classification-loss weight
  double beta_gp = 10.0;     // gradient-penalty weight
  double learning_rate = 0.0001;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.9;
  int critic_steps = 5;  // critic updates per generator update
  Index batch_size = 64;
  int epochs = 50;
  int checkpoint_every = 0;  // epochs between periodic snapshots; 0 = final only
  Index synthesize_per_class = 300;
  double pretrain_learning_rate = 0.05;
  int pretrain_epochs = 300;
  std::uint64_t seed = 0;

  void validate() const {
    if (lambda_cls < 0) throw ConfigError("gan: lambda must be non-negative");
    if (beta_gp < 0) throw ConfigError("gan: beta must be non-negative");
    if (noise_dim <= 0 || feature_dim <= 0 || generator_hidden <= 0 ||
        discriminator_hidden <= 0 || batch_size <= 0)
      throw ConfigError("gan: dimensions must be positive");
    if (learning_rate <= 0) throw ConfigError("gan: learning rate must be positive");
    if (critic_steps < 1) throw ConfigError("gan: critic steps must be at least 1");
    if (epochs < 0) throw ConfigError("gan: epochs must be non-negative");
    if (synthesize_per_class < 0) throw ConfigError("gan: synthesize count must be non-negative");
  }
};

inline constexpr double kCriticLeakySlope = 0.2;

// Two fully connected layers each. Weight layout:
//   generator:      hidden x (noise+embed), 1 x hidden bias,
//                   feature x hidden, 1 x feature bias; relu throughout.
//   discriminator:  hidden x (feature+embed), 1 x hidden bias,
//                   1 x hidden, 1 x 1 bias; leaky-relu hidden, linear out.
template <class Scalar>
struct GanParams {
  MatX<Scalar> g_w1, g_b1, g_w2, g_b2;
  MatX<Scalar> d_w1, d_b1, d_w2, d_b2;

  static const std::vector<std::string>& names() {
    static const std::vector<std::string> order = {"g.w1", "g.b1", "g.w2", "g.b2",
                                                   "d.w1", "d.b1", "d.w2", "d.b2"};
    return order;
  }

  MatX<Scalar>& by_name(const std::string& name) {
    if (name == "g.w1") return g_w1;
    if (name == "g.b1") return g_b1;
    if (name == "g.w2") return g_w2;
    if (name == "g.b2") return g_b2;
    if (name == "d.w1") return d_w1;
    if (name == "d.b1") return d_b1;
    if (name == "d.w2") return d_w2;
    if (name == "d.b2") return d_b2;
    throw UsageError("unknown gan parameter '" + name + "'");
  }
  const MatX<Scalar>& by_name(const std::string& name) const {
    return const_cast<GanParams*>(this)->by_name(name);
  }
};

template <class Scalar>
GanParams<Scalar> init_gan_params(const GanConfig& cfg, Index embed_dim, SeededRng& rng) {
  GanParams<Scalar> p;
  p.g_w1 = rng.xavier_matrix(cfg.generator_hidden, cfg.noise_dim + embed_dim).template cast<Scalar>();
  p.g_b1 = MatX<Scalar>::Zero(1, cfg.generator_hidden);
  p.g_w2 = rng.xavier_matrix(cfg.feature_dim, cfg.generator_hidden).template cast<Scalar>();
  p.g_b2 = MatX<Scalar>::Zero(1, cfg.feature_dim);
  p.d_w1 =
      rng.xavier_matrix(cfg.discriminator_hidden, cfg.feature_dim + embed_dim).template cast<Scalar>();
  p.d_b1 = MatX<Scalar>::Zero(1, cfg.discriminator_hidden);
  p.d_w2 = rng.xavier_matrix(1, cfg.discriminator_hidden).template cast<Scalar>();
  p.d_b2 = MatX<Scalar>::Zero(1, 1);
  return p;
}

// ---- Plain (non-graph) forward paths ----------------------------------------

// x_hat = relu(W2 relu(W1 [z; g] + b1) + b2), one row per batch element.
template <class Scalar>
MatX<Scalar> generate(const MatX<Scalar>& z, const MatX<Scalar>& cond,
                      const GanParams<Scalar>& p) {
  if (z.rows() != cond.rows())
    throw StructuralError("generate: noise and conditioning batch sizes differ");
  if (z.cols() + cond.cols() != p.g_w1.cols())
    throw StructuralError("generate: noise+embedding dimension " +
                          std::to_string(z.cols() + cond.cols()) +
                          " does not match generator input " + std::to_string(p.g_w1.cols()));
  MatX<Scalar> in(z.rows(), z.cols() + cond.cols());
  in << z, cond;
  MatX<Scalar> h =
      ((in * p.g_w1.transpose()).rowwise() + p.g_b1.row(0)).cwiseMax(Scalar(0));
  return ((h * p.g_w2.transpose()).rowwise() + p.g_b2.row(0)).cwiseMax(Scalar(0));
}

template <class Scalar>
VecX<Scalar> generate(const VecX<Scalar>& z, const VecX<Scalar>& cond,
                      const GanParams<Scalar>& p) {
  MatX<Scalar> out = generate(MatX<Scalar>(z.transpose()), MatX<Scalar>(cond.transpose()), p);
  return out.row(0).transpose();
}

template <class Scalar>
MatX<Scalar> critic(const MatX<Scalar>& x, const MatX<Scalar>& cond, const GanParams<Scalar>& p) {
  if (x.cols() + cond.cols() != p.d_w1.cols())
    throw StructuralError("critic: feature+embedding dimension does not match input layer");
  MatX<Scalar> in(x.rows(), x.cols() + cond.cols());
  in << x, cond;
  MatX<Scalar> pre = (in * p.d_w1.transpose()).rowwise() + p.d_b1.row(0);
  MatX<Scalar> h = pre.unaryExpr([](Scalar v) {
    return v > Scalar(0) ? v : Scalar(kCriticLeakySlope) * v;
  });
  return (h * p.d_w2.transpose()).rowwise() + p.d_b2.row(0);
}

// x_tilde = eps x + (1 - eps) x_hat, one draw per batch element.
template <class Scalar>
MatX<Scalar> interpolate(const MatX<Scalar>& x, const MatX<Scalar>& x_hat,
                         const VecX<Scalar>& eps) {
  if (x.rows() != x_hat.rows() || x.cols() != x_hat.cols())
    throw StructuralError("interpolate: operand shapes differ");
  if (eps.size() != x.rows())
    throw StructuralError("interpolate: one epsilon per batch element required");
  MatX<Scalar> out(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r)
    out.row(r) = eps(r) * x.row(r) + (Scalar(1) - eps(r)) * x_hat.row(r);
  return out;
}

template <class Scalar>
VecX<Scalar> interpolate(const VecX<Scalar>& x, const VecX<Scalar>& x_hat, Scalar eps) {
  VecX<Scalar> e(1);
  e << eps;
  return interpolate(MatX<Scalar>(x.transpose()), MatX<Scalar>(x_hat.transpose()), e)
      .row(0)
      .transpose();
}

// ---- Differentiable step graphs ---------------------------------------------

namespace detail {

template <class Scalar>
struct DiscriminatorNodes {
  ad::Expr<Scalar> w1, b1, w2, b2;
};

template <class Scalar>
ad::Expr<Scalar> critic_graph(ad::Expr<Scalar> x, ad::Expr<Scalar> cond,
                              const DiscriminatorNodes<Scalar>& d) {
  auto h = ad::leaky_relu(
      ad::bias_add(ad::matmul(ad::hcat(x, cond), ad::transpose(d.w1)), d.b1),
      Scalar(kCriticLeakySlope));
  return ad::bias_add(ad::matmul(h, ad::transpose(d.w2)), d.b2);
}

}  // namespace detail

// Critic update graph over one batch. The objective
//   E[D(x, g)] - E[D(x_hat, g)] - beta E[(||grad_xt D(xt, g)|| - 1)^2]
// is maximized; its negation feeds the optimizer. The penalty's parameter
// gradient runs through the emitted backward nodes (double backward).
template <class Scalar>
struct CriticStepGraph {
  std::unique_ptr<ad::Graph<Scalar>> graph;
  ad::Expr<Scalar> objective;
  ad::Expr<Scalar> wasserstein;  // E[D(real)] - E[D(fake)]
  ad::Expr<Scalar> penalty;
  std::vector<std::string> param_names;
  std::vector<ad::Expr<Scalar>> param_grads;  // of the negated objective
};

template <class Scalar>
CriticStepGraph<Scalar> build_critic_step(const GanConfig& cfg, Index embed_dim, Index batch) {
  CriticStepGraph<Scalar> cs;
  cs.graph = std::make_unique<ad::Graph<Scalar>>();
  auto& g = *cs.graph;

  auto x_real = g.placeholder("x_real", batch, cfg.feature_dim);
  auto x_fake = g.placeholder("x_fake", batch, cfg.feature_dim);
  auto x_tilde = g.placeholder("x_tilde", batch, cfg.feature_dim);
  auto cond = g.placeholder("cond", batch, embed_dim);

  detail::DiscriminatorNodes<Scalar> d{
      g.placeholder("d.w1", cfg.discriminator_hidden, cfg.feature_dim + embed_dim),
      g.placeholder("d.b1", 1, cfg.discriminator_hidden),
      g.placeholder("d.w2", 1, cfg.discriminator_hidden),
      g.placeholder("d.b2", 1, 1)};

  auto d_real = detail::critic_graph(x_real, cond, d);
  auto d_fake = detail::critic_graph(x_fake, cond, d);
  cs.wasserstein = ad::sub(ad::mean_all(d_real), ad::mean_all(d_fake));

  auto d_tilde = detail::critic_graph(x_tilde, cond, d);
  auto grad_xt = ad::gradient(ad::sum_all(d_tilde), x_tilde,
                              ad::DiffMode::kRequireTwiceDifferentiable);
  cs.penalty = ad::mean_all(ad::square(ad::shift(ad::row_l2_norm(grad_xt), Scalar(-1))));

  cs.objective =
      ad::sub(cs.wasserstein, ad::scale(cs.penalty, static_cast<Scalar>(cfg.beta_gp)));
  auto minimized = ad::neg(cs.objective);

  cs.param_names = {"d.w1", "d.b1", "d.w2", "d.b2"};
  std::vector<ad::Expr<Scalar>> wrt{d.w1, d.b1, d.w2, d.b2};
  cs.param_grads = ad::gradients(minimized, std::span<const ad::Expr<Scalar>>(wrt));
  return cs;
}

// Generator update graph: L_G = -E[D(x_hat, g)] - lambda E[log P(y | x_hat)],
// with the critic and the seen classifier frozen.
template <class Scalar>
struct GeneratorStepGraph {
  std::unique_ptr<ad::Graph<Scalar>> graph;
  ad::Expr<Scalar> x_hat;
  ad::Expr<Scalar> loss;
  ad::Expr<Scalar> critic_term;  // E[D(x_hat)]
  std::vector<std::string> param_names;
  std::vector<ad::Expr<Scalar>> param_grads;
  bool has_classifier = false;
};

template <class Scalar>
GeneratorStepGraph<Scalar> build_generator_step(const GanConfig& cfg, Index embed_dim,
                                                Index batch, Index seen_labels) {
  GeneratorStepGraph<Scalar> gs;
  gs.graph = std::make_unique<ad::Graph<Scalar>>();
  auto& g = *gs.graph;

  auto z = g.placeholder("z", batch, cfg.noise_dim);
  auto cond = g.placeholder("cond", batch, embed_dim);
  auto g_w1 = g.placeholder("g.w1", cfg.generator_hidden, cfg.noise_dim + embed_dim);
  auto g_b1 = g.placeholder("g.b1", 1, cfg.generator_hidden);
  auto g_w2 = g.placeholder("g.w2", cfg.feature_dim, cfg.generator_hidden);
  auto g_b2 = g.placeholder("g.b2", 1, cfg.feature_dim);

  auto hidden = ad::relu(ad::bias_add(ad::matmul(ad::hcat(z, cond), ad::transpose(g_w1)), g_b1));
  gs.x_hat = ad::relu(ad::bias_add(ad::matmul(hidden, ad::transpose(g_w2)), g_b2));

  detail::DiscriminatorNodes<Scalar> d{
      g.placeholder("d.w1", cfg.discriminator_hidden, cfg.feature_dim + embed_dim),
      g.placeholder("d.b1", 1, cfg.discriminator_hidden),
      g.placeholder("d.w2", 1, cfg.discriminator_hidden),
      g.placeholder("d.b2", 1, 1)};
  gs.critic_term = ad::mean_all(detail::critic_graph(gs.x_hat, cond, d));
  auto loss = ad::neg(gs.critic_term);

  gs.has_classifier = cfg.lambda_cls > 0 && seen_labels > 0;
  if (gs.has_classifier) {
    auto theta = g.placeholder("cls.theta", seen_labels, cfg.feature_dim);
    auto onehot = g.placeholder("cls.onehot", batch, seen_labels);
    auto log_p = ad::log_softmax_rows(ad::matmul(gs.x_hat, ad::transpose(theta)));
    auto picked = ad::mean_all(ad::row_sum(ad::cwise_mul(log_p, onehot)));
    loss = ad::sub(loss, ad::scale(picked, static_cast<Scalar>(cfg.lambda_cls)));
  }
  gs.loss = loss;

  gs.param_names = {"g.w1", "g.b1", "g.w2", "g.b2"};
  std::vector<ad::Expr<Scalar>> wrt{g_w1, g_b1, g_w2, g_b2};
  gs.param_grads = ad::gradients(gs.loss, std::span<const ad::Expr<Scalar>>(wrt));
  return gs;
}

// ---- Spec-level loss values --------------------------------------------------

// Mean squared excess of the critic's input-gradient norm over 1 on the
// interpolate batch; differentiable against the critic parameters.
template <class Scalar>
Scalar gradient_penalty(const GanParams<Scalar>& p, const MatX<Scalar>& x_tilde,
                        const MatX<Scalar>& cond) {
  GanConfig probe;
  probe.feature_dim = x_tilde.cols();
  probe.discriminator_hidden = p.d_w1.rows();
  probe.beta_gp = 1.0;
  auto cs = build_critic_step<Scalar>(probe, cond.cols(), x_tilde.rows());
  ad::Evaluator<Scalar> ev(*cs.graph);
  ev.bind("x_tilde", x_tilde);
  ev.bind("cond", cond);
  for (const char* n : {"d.w1", "d.b1", "d.w2", "d.b2"}) ev.bind(n, p.by_name(n));
  return ev.value(cs.penalty)(0, 0);
}

// L_G over an explicit batch; labels index into the frozen classifier.
template <class Scalar>
Scalar generator_loss(const MatX<Scalar>& z, const MatX<Scalar>& cond,
                      const std::vector<Index>& label_ids, const GanParams<Scalar>& p,
                      const SoftmaxClassifier& cls, double lambda) {
  MatX<Scalar> x_hat = generate(z, cond, p);
  Scalar loss = -critic(x_hat, cond, p).mean();
  if (lambda > 0) {
    if (cls.label_count() == 0)
      throw UsageError("generator loss with lambda > 0 needs a seen classifier");
    Scalar total = Scalar(0);
    for (Index r = 0; r < x_hat.rows(); ++r) {
      const Index y = label_ids[static_cast<std::size_t>(r)];
      if (y < 0 || y >= cls.label_count())
        throw UsageError("generator batch label outside the seen label set");
      VecXd probs = predict_proba(cls, x_hat.row(r).transpose().template cast<double>());
      total += static_cast<Scalar>(std::log(probs(y)));
    }
    loss -= static_cast<Scalar>(lambda) * total / static_cast<Scalar>(x_hat.rows());
  }
  return loss;
}

// The maximized critic objective E[D(x,g)] - E[D(x_hat,g)] - beta GP, with
// x_hat generated from the batch noise and one epsilon per element.
template <class Scalar>
Scalar discriminator_loss(const MatX<Scalar>& x_real, const MatX<Scalar>& z,
                          const MatX<Scalar>& cond, const VecX<Scalar>& eps,
                          const GanParams<Scalar>& p, double beta) {
  if (beta < 0) throw ConfigError("discriminator loss: beta must be non-negative");
  MatX<Scalar> x_hat = generate(z, cond, p);
  MatX<Scalar> x_tilde = interpolate(x_real, x_hat, eps);
  const Scalar wasserstein = critic(x_real, cond, p).mean() - critic(x_hat, cond, p).mean();
  return wasserstein - static_cast<Scalar>(beta) * gradient_penalty(p, x_tilde, cond);
}

// ---- Training ---------------------------------------------------------------

struct GanTrainingLog {
  std::vector<double> generator_loss;    // one per generator step
  std::vector<double> critic_objective;  // one per critic step
  std::vector<double> penalty;           // one per critic step
};

struct GanCheckpoint {
  GanConfig config;
  Index embed_dim = 0;
  int epoch = 0;
  std::vector<std::pair<std::string, Eigen::MatrixXf>> params;  // fixed name order
  SoftmaxClassifier seen_classifier;  // empty when lambda = 0
  std::string rng_state;
  std::string embeddings_digest;
  std::string features_digest;
  std::string config_digest;

  template <class Scalar>
  GanParams<Scalar> typed_params() const {
    GanParams<Scalar> p;
    for (const auto& [name, value] : params) p.by_name(name) = value.template cast<Scalar>();
    return p;
  }
};

void save_checkpoint(const GanCheckpoint& ck, const std::filesystem::path& path);
GanCheckpoint load_checkpoint(const std::filesystem::path& path);

// Frozen linear softmax over real seen features for the Eq.-5 term.
template <class Scalar>
SoftmaxClassifier pretrain_seen_classifier(const FeatureSet& seen,
                                           const std::vector<std::string>& seen_labels,
                                           const GanConfig& cfg) {
  SoftmaxHyper hyper;
  hyper.learning_rate = cfg.pretrain_learning_rate;
  hyper.epochs = cfg.pretrain_epochs;
  return train_softmax<Scalar>(seen, seen_labels, hyper);
}

namespace detail {

template <class Scalar>
GanCheckpoint to_checkpoint(const GanConfig& cfg, Index embed_dim, int epoch,
                            const ad::ParameterSet<Scalar>& params,
                            const SoftmaxClassifier& cls, const std::string& rng_state) {
  GanCheckpoint ck;
  ck.config = cfg;
  ck.embed_dim = embed_dim;
  ck.epoch = epoch;
  for (const auto& name : GanParams<Scalar>::names())
    ck.params.emplace_back(name, params.at(name).template cast<float>());
  ck.seen_classifier = cls;
  ck.rng_state = rng_state;
  return ck;
}

}  // namespace detail

// Alternates critic and generator updates over the seen features. Restarts
// deterministically from `resume_from` when given (parameters and RNG state
// are restored; optimizer moments reset by design of the checkpoint format).
// An optional sink receives periodic snapshots every checkpoint_every epochs.
template <class Scalar>
GanCheckpoint train_gan(const FeatureSet& seen, const ClassEmbeddingTable& table,
                        const GanConfig& cfg, GanTrainingLog* log = nullptr,
                        const GanCheckpoint* resume_from = nullptr,
                        std::vector<GanCheckpoint>* periodic = nullptr) {
  cfg.validate();
  seen.validate();
  if (seen.rows() == 0) throw UsageError("gan: no seen features to train on");
  if (seen.dim() != cfg.feature_dim)
    throw ValidationError("gan: feature file dimension " + std::to_string(seen.dim()) +
                          " does not match configured feature_dim " +
                          std::to_string(cfg.feature_dim));
  const Index embed_dim = table.dim();

  // Sorted seen labels; every one needs an embedding and at least one row.
  std::vector<std::string> seen_labels;
  {
    std::set<std::string> s(seen.labels.begin(), seen.labels.end());
    seen_labels.assign(s.begin(), s.end());
  }
  MatXd label_embeddings(static_cast<Index>(seen_labels.size()), embed_dim);
  std::map<std::string, Index> seen_index;
  for (Index i = 0; i < static_cast<Index>(seen_labels.size()); ++i) {
    const auto& name = seen_labels[static_cast<std::size_t>(i)];
    if (!table.contains(name))
      throw ValidationError("gan: seen class '" + name + "' has no embedding");
    label_embeddings.row(i) = table.embedding(name).transpose();
    seen_index[name] = i;
  }

  SoftmaxClassifier cls;
  if (cfg.lambda_cls > 0) {
    if (resume_from != nullptr)
      cls = resume_from->seen_classifier;
    else
      cls = pretrain_seen_classifier<Scalar>(seen, seen_labels, cfg);
  }

  ad::ParameterSet<Scalar> params;
  {
    GanParams<Scalar> init;
    if (resume_from != nullptr) {
      init = resume_from->template typed_params<Scalar>();
    } else {
      SeededRng init_rng(SeededRng::derive(cfg.seed, 0x6A11));
      init = init_gan_params<Scalar>(cfg, embed_dim, init_rng);
    }
    for (const auto& name : GanParams<Scalar>::names()) params.insert(name, init.by_name(name));
  }

  SeededRng rng(SeededRng::derive(cfg.seed, 0x5EED));
  if (resume_from != nullptr) rng.load_state(resume_from->rng_state);
  const int start_epoch = resume_from != nullptr ? resume_from->epoch : 0;

  const Index batch = std::min<Index>(cfg.batch_size, seen.rows());
  auto critic_step = build_critic_step<Scalar>(cfg, embed_dim, batch);
  auto gen_step = build_generator_step<Scalar>(cfg, embed_dim, batch,
                                               static_cast<Index>(seen_labels.size()));

  MatX<Scalar> theta_s;
  if (gen_step.has_classifier) theta_s = cls.theta.cast<Scalar>();

  auto draw_batch = [&](MatX<Scalar>& x, MatX<Scalar>& cond, std::vector<Index>& ids) {
    x.resize(batch, cfg.feature_dim);
    cond.resize(batch, embed_dim);
    ids.resize(static_cast<std::size_t>(batch));
    for (Index b = 0; b < batch; ++b) {
      const Index r = static_cast<Index>(rng.uniform_int(0, seen.rows() - 1));
      x.row(b) = seen.x.row(r).template cast<Scalar>();
      const auto& label = seen.labels[static_cast<std::size_t>(r)];
      cond.row(b) = table.embedding(label).transpose().template cast<Scalar>();
      ids[static_cast<std::size_t>(b)] = seen_index.at(label);
    }
  };
  auto draw_noise = [&]() {
    MatX<Scalar> z(batch, cfg.noise_dim);
    for (Index r = 0; r < batch; ++r)
      for (Index c = 0; c < cfg.noise_dim; ++c) z(r, c) = static_cast<Scalar>(rng.normal());
    return z;
  };

  AdamOptimizer<Scalar> adam_d(static_cast<Scalar>(cfg.learning_rate),
                               static_cast<Scalar>(cfg.adam_beta1),
                               static_cast<Scalar>(cfg.adam_beta2));
  AdamOptimizer<Scalar> adam_g(static_cast<Scalar>(cfg.learning_rate),
                               static_cast<Scalar>(cfg.adam_beta1),
                               static_cast<Scalar>(cfg.adam_beta2));

  const Index iters_per_epoch = std::max<Index>(1, seen.rows() / batch);
  MatX<Scalar> bx, bcond, z;
  std::vector<Index> bids;

  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    for (Index iter = 0; iter < iters_per_epoch; ++iter) {
      for (int c = 0; c < cfg.critic_steps; ++c) {
        draw_batch(bx, bcond, bids);
        z = draw_noise();

        MatX<Scalar> x_hat;
        {
          ad::Evaluator<Scalar> ev(*gen_step.graph);
          ev.bind(params);
          ev.bind("z", z);
          ev.bind("cond", bcond);
          x_hat = ev.value(gen_step.x_hat);
        }
        VecX<Scalar> eps(batch);
        for (Index r = 0; r < batch; ++r) eps(r) = static_cast<Scalar>(rng.uniform());
        MatX<Scalar> x_tilde = interpolate(bx, x_hat, eps);

        ad::Evaluator<Scalar> ev(*critic_step.graph);
        ev.bind(params);
        ev.bind("x_real", bx);
        ev.bind("x_fake", x_hat);
        ev.bind("x_tilde", x_tilde);
        ev.bind("cond", bcond);
        const double objective = static_cast<double>(ev.value(critic_step.objective)(0, 0));
        const double gp = static_cast<double>(ev.value(critic_step.penalty)(0, 0));
        if (!std::isfinite(objective))
          throw TrainingError("gan: critic objective diverged at epoch " + std::to_string(epoch));
        if (log) {
          log->critic_objective.push_back(objective);
          log->penalty.push_back(gp);
        }
        std::map<std::string, MatX<Scalar>> grads;
        for (std::size_t i = 0; i < critic_step.param_names.size(); ++i)
          grads[critic_step.param_names[i]] = ev.value(critic_step.param_grads[i]);
        adam_d.step(params, grads);
      }

      draw_batch(bx, bcond, bids);
      z = draw_noise();
      ad::Evaluator<Scalar> ev(*gen_step.graph);
      ev.bind(params);
      ev.bind("z", z);
      ev.bind("cond", bcond);
      if (gen_step.has_classifier) {
        MatX<Scalar> onehot =
            MatX<Scalar>::Zero(batch, static_cast<Index>(seen_labels.size()));
        for (Index b = 0; b < batch; ++b) onehot(b, bids[static_cast<std::size_t>(b)]) = Scalar(1);
        ev.bind("cls.theta", theta_s);
        ev.bind("cls.onehot", onehot);
      }
      const double g_loss = static_cast<double>(ev.value(gen_step.loss)(0, 0));
      if (!std::isfinite(g_loss))
        throw TrainingError("gan: generator loss diverged at epoch " + std::to_string(epoch));
      if (log) log->generator_loss.push_back(g_loss);
      std::map<std::string, MatX<Scalar>> grads;
      for (std::size_t i = 0; i < gen_step.param_names.size(); ++i)
        grads[gen_step.param_names[i]] = ev.value(gen_step.param_grads[i]);
      adam_g.step(params, grads);
    }
    if (periodic != nullptr && cfg.checkpoint_every > 0 &&
        (epoch + 1) % cfg.checkpoint_every == 0 && epoch + 1 < cfg.epochs)
      periodic->push_back(
          detail::to_checkpoint(cfg, embed_dim, epoch + 1, params, cls, rng.save_state()));
  }

  return detail::to_checkpoint(cfg, embed_dim, cfg.epochs, params, cls, rng.save_state());
}

// ---- Synthesis ---------------------------------------------------------------

// Features for one class from an explicit noise stream.
inline FeatureSet synthesize_for_class(const GanCheckpoint& ck, const std::string& label,
                                       const VecXd& embedding, Index count, std::uint64_t seed) {
  const auto p = ck.typed_params<double>();
  SeededRng rng(seed);
  FeatureSet fs;
  fs.x.resize(count, ck.config.feature_dim);
  for (Index i = 0; i < count; ++i) {
    VecXd z(ck.config.noise_dim);
    for (Index c = 0; c < z.size(); ++c) z(c) = rng.normal();
    fs.x.row(i) = generate<double>(z, embedding, p).transpose();
    fs.labels.push_back(label);
    fs.provenance.push_back(Provenance::kSynthetic);
  }
  return fs;
}

// n_per_class synthetic rows for every unseen class, each class on an
// independent derived noise stream (safe to parallelize per class).
inline FeatureSet synthesize_unseen(const GanCheckpoint& ck, const ClassEmbeddingTable& table,
                                    const std::vector<std::string>& unseen, Index n_per_class,
                                    std::uint64_t seed) {
  if (n_per_class < 0) throw UsageError("synthesize: negative count");
  FeatureSet out;
  out.x.resize(0, ck.config.feature_dim);
  std::vector<std::string> ordered = unseen;
  std::sort(ordered.begin(), ordered.end());
  for (std::size_t i = 0; i < ordered.size(); ++i) {
    if (!table.contains(ordered[i]))
      throw ValidationError("synthesize: unseen class '" + ordered[i] + "' has no embedding");
    out.append(synthesize_for_class(ck, ordered[i], table.embedding(ordered[i]), n_per_class,
                                    SeededRng::derive(seed, i)));
  }
  if (out.rows() == 0) out.x.resize(0, ck.config.feature_dim);
  return out;
}

}  // namespace kgzsl
