#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "kgzsl/gan.hpp"
#include "oracles.hpp"

#include <cmath>
#include <filesystem>

using namespace kgzsl;

namespace {

GanConfig tiny_config() {
  GanConfig cfg;
  cfg.noise_dim = 3;
  cfg.feature_dim = 4;
  cfg.generator_hidden = 6;
  cfg.discriminator_hidden = 5;
  cfg.batch_size = 4;
  cfg.epochs = 2;
  cfg.critic_steps = 2;
  cfg.learning_rate = 1e-3;
  cfg.pretrain_epochs = 50;
  return cfg;
}

GanParams<double> random_params(const GanConfig& cfg, Index embed_dim, std::uint64_t seed) {
  SeededRng rng(seed);
  return init_gan_params<double>(cfg, embed_dim, rng);
}

// Exactly linear critic D(x, c) = w.x built from the leaky pair
// leaky(a) - leaky(-a) = (1 + slope) a.
GanParams<double> linear_critic(const VecXd& w, Index embed_dim) {
  const double s = kCriticLeakySlope;
  const Index f = w.size();
  GanParams<double> p;
  p.d_w1 = MatXd::Zero(2, f + embed_dim);
  p.d_w1.row(0).head(f) = w.transpose();
  p.d_w1.row(1).head(f) = -w.transpose();
  p.d_b1 = MatXd::Zero(1, 2);
  p.d_w2 = MatXd(1, 2);
  p.d_w2 << 1.0 / (1.0 + s), -1.0 / (1.0 + s);
  p.d_b2 = MatXd::Zero(1, 1);
  p.g_w1 = MatXd::Zero(1, 1 + embed_dim);
  p.g_b1 = MatXd::Zero(1, 1);
  p.g_w2 = MatXd::Zero(f, 1);
  p.g_b2 = MatXd::Zero(1, f);
  return p;
}

FeatureSet cluster(const std::string& label, const VecXd& mean, Index n, double sigma,
                   SeededRng& rng) {
  FeatureSet fs;
  fs.x.resize(n, mean.size());
  for (Index i = 0; i < n; ++i) {
    fs.x.row(i) = (mean + sigma * VecXd(rng.gaussian_matrix(mean.size(), 1))).transpose();
    fs.labels.push_back(label);
    fs.provenance.push_back(Provenance::kSeen);
  }
  return fs;
}

ClassEmbeddingTable table_for(const std::vector<std::string>& classes, Index dim,
                              std::uint64_t seed) {
  SeededRng rng(seed);
  std::vector<std::string> sorted = classes;
  std::sort(sorted.begin(), sorted.end());
  return make_embedding_table(sorted, rng.gaussian_matrix(static_cast<Index>(sorted.size()), dim),
                              MatXd(static_cast<Index>(sorted.size()), 0));
}

}  // namespace

TEST_CASE("generate: all-zero parameters produce the zero vector") {
  auto cfg = tiny_config();
  GanParams<double> p = random_params(cfg, 2, 1);
  for (const auto& name : GanParams<double>::names()) p.by_name(name).setZero();
  SeededRng rng(2);
  VecXd z = rng.gaussian_matrix(cfg.noise_dim, 1);
  VecXd g = rng.gaussian_matrix(2, 1);
  CHECK(generate(z, g, p).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("generate: deterministic and non-negative") {
  auto cfg = tiny_config();
  auto p = random_params(cfg, 2, 3);
  SeededRng rng(4);
  VecXd z = rng.gaussian_matrix(cfg.noise_dim, 1);
  VecXd g = rng.gaussian_matrix(2, 1);
  VecXd a = generate(z, g, p), b = generate(z, g, p);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.minCoeff() >= 0.0);
}

TEST_CASE("generate: matches an independent dense two-layer evaluation") {
  auto cfg = tiny_config();
  auto p = random_params(cfg, 2, 5);
  SeededRng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    VecXd z = rng.gaussian_matrix(cfg.noise_dim, 1);
    VecXd g = rng.gaussian_matrix(2, 1);
    VecXd in(z.size() + g.size());
    in << z, g;
    VecXd h = (p.g_w1 * in + p.g_b1.transpose()).cwiseMax(0.0);
    VecXd want = (p.g_w2 * h + p.g_b2.transpose()).cwiseMax(0.0);
    CHECK((generate(z, g, p) - want).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("generate: dimension mismatch is a structural error") {
  auto cfg = tiny_config();
  auto p = random_params(cfg, 2, 7);
  CHECK_THROWS_AS((void)generate(VecXd(VecXd::Zero(cfg.noise_dim + 1)),
                                 VecXd(VecXd::Zero(2)), p),
                  StructuralError);
}

TEST_CASE("interpolate: endpoints, midpoint, and the box property") {
  VecXd x(2), xh(2);
  x << 2.0, 0.0;
  xh << 0.0, 2.0;
  CHECK((interpolate(x, xh, 1.0) - x).cwiseAbs().maxCoeff() == 0.0);
  CHECK((interpolate(x, xh, 0.0) - xh).cwiseAbs().maxCoeff() == 0.0);
  VecXd mid = interpolate(x, xh, 0.5);
  CHECK(mid(0) == 1.0);
  CHECK(mid(1) == 1.0);

  SeededRng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    VecXd a = rng.gaussian_matrix(3, 1), b = rng.gaussian_matrix(3, 1);
    VecXd m = interpolate(a, b, rng.uniform());
    for (Index i = 0; i < 3; ++i) {
      CHECK(m(i) >= std::min(a(i), b(i)) - 1e-15);
      CHECK(m(i) <= std::max(a(i), b(i)) + 1e-15);
    }
  }
}

TEST_CASE("gradient_penalty: unit-norm linear critic scores zero") {
  VecXd w(3);
  w << 2.0 / 3.0, -2.0 / 3.0, 1.0 / 3.0;
  auto p = linear_critic(w, 2);
  SeededRng rng(9);
  MatXd xt = rng.gaussian_matrix(5, 3);
  MatXd cond = rng.gaussian_matrix(5, 2);
  CHECK(gradient_penalty(p, xt, cond) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("gradient_penalty: norm-3 linear critic scores (3-1)^2") {
  VecXd w(3);
  w << 3.0, 0.0, 0.0;
  auto p = linear_critic(w, 1);
  SeededRng rng(10);
  CHECK(gradient_penalty(p, MatXd(rng.gaussian_matrix(4, 3)),
                         MatXd(rng.gaussian_matrix(4, 1))) == doctest::Approx(4.0));
}

TEST_CASE("gradient_penalty: random critic matches the finite-difference oracle within 1e-6") {
  auto cfg = tiny_config();
  SeededRng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    auto p = random_params(cfg, 2, 20 + static_cast<std::uint64_t>(trial));
    MatXd xt = rng.gaussian_matrix(3, cfg.feature_dim);
    MatXd cond = rng.gaussian_matrix(3, 2);

    // Oracle: finite-difference the critic per coordinate of each row, then
    // recompute the penalty from those gradients.
    double total = 0.0;
    for (Index r = 0; r < xt.rows(); ++r) {
      VecXd grad(cfg.feature_dim);
      for (Index c = 0; c < cfg.feature_dim; ++c) {
        MatXd plus = xt, minus = xt;
        plus(r, c) += 1e-6;
        minus(r, c) -= 1e-6;
        grad(c) = (critic(MatXd(plus.row(r)), MatXd(cond.row(r)), p)(0, 0) -
                   critic(MatXd(minus.row(r)), MatXd(cond.row(r)), p)(0, 0)) /
                  2e-6;
      }
      total += std::pow(grad.norm() - 1.0, 2.0);
    }
    const double oracle_penalty = total / static_cast<double>(xt.rows());
    CHECK(gradient_penalty(p, xt, cond) == doctest::Approx(oracle_penalty).epsilon(1e-6));
  }
}

TEST_CASE("gradient_penalty: non-negative on random critics") {
  auto cfg = tiny_config();
  SeededRng rng(12);
  for (int trial = 0; trial < 25; ++trial) {
    auto p = random_params(cfg, 2, 40 + static_cast<std::uint64_t>(trial));
    CHECK(gradient_penalty(p, MatXd(rng.gaussian_matrix(3, cfg.feature_dim)),
                           MatXd(rng.gaussian_matrix(3, 2))) >= 0.0);
  }
}

TEST_CASE("generator_loss: lambda 0 is the negated critic mean") {
  auto cfg = tiny_config();
  auto p = random_params(cfg, 2, 13);
  SeededRng rng(14);
  MatXd z = rng.gaussian_matrix(5, cfg.noise_dim);
  MatXd cond = rng.gaussian_matrix(5, 2);
  const double loss = generator_loss(z, cond, {0, 0, 0, 0, 0}, p, SoftmaxClassifier{}, 0.0);
  const double want = -critic(generate(z, cond, p), cond, p).mean();
  CHECK(loss == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("generator_loss: uniform classifier over 10 classes adds 0.02303 at lambda 0.01") {
  auto cfg = tiny_config();
  auto p = random_params(cfg, 2, 15);
  for (const auto& name : GanParams<double>::names()) p.by_name(name).setZero();
  std::vector<std::string> labels;
  for (int i = 0; i < 10; ++i) labels.push_back("s" + std::to_string(i));
  auto cls = make_softmax_classifier(labels, MatXd(MatXd::Zero(10, cfg.feature_dim)));
  SeededRng rng(16);
  MatXd z = rng.gaussian_matrix(4, cfg.noise_dim);
  MatXd cond = rng.gaussian_matrix(4, 2);
  const double loss = generator_loss(z, cond, {1, 3, 5, 7}, p, cls, 0.01);
  CHECK(loss == doctest::Approx(-0.01 * std::log(0.1)).epsilon(1e-9));
  CHECK(loss == doctest::Approx(0.02302585).epsilon(1e-6));
}

TEST_CASE("generator_loss: term-by-term oracle on random batches") {
  auto cfg = tiny_config();
  SeededRng rng(17);
  auto p = random_params(cfg, 2, 18);
  auto cls = make_softmax_classifier({"a", "b", "c"},
                                     MatXd(rng.gaussian_matrix(3, cfg.feature_dim)));
  for (int trial = 0; trial < 10; ++trial) {
    MatXd z = rng.gaussian_matrix(4, cfg.noise_dim);
    MatXd cond = rng.gaussian_matrix(4, 2);
    std::vector<Index> y = {2, 0, 1, 2};

    double critic_sum = 0.0, log_p_sum = 0.0;
    for (Index r = 0; r < 4; ++r) {
      VecXd zx = z.row(r).transpose(), cx = cond.row(r).transpose();
      VecXd xh = generate(zx, cx, p);
      critic_sum += critic(MatXd(xh.transpose()), MatXd(cx.transpose()), p)(0, 0);
      VecXd scores = cls.theta * xh;
      const double m = scores.maxCoeff();
      const double lse = m + std::log((scores.array() - m).exp().sum());
      log_p_sum += scores(y[static_cast<std::size_t>(r)]) - lse;
    }
    const double want = -critic_sum / 4.0 - 0.01 * log_p_sum / 4.0;
    CHECK(generator_loss(z, cond, y, p, cls, 0.01) == doctest::Approx(want).epsilon(1e-10));
  }
}

TEST_CASE("generator_loss: label outside the seen set is a usage error") {
  auto cfg = tiny_config();
  auto p = random_params(cfg, 2, 19);
  auto cls = make_softmax_classifier({"a", "b"}, MatXd(MatXd::Zero(2, cfg.feature_dim)));
  SeededRng rng(20);
  CHECK_THROWS_AS((void)generator_loss(MatXd(rng.gaussian_matrix(1, cfg.noise_dim)),
                                       MatXd(rng.gaussian_matrix(1, 2)), {5}, p, cls, 0.01),
                  UsageError);
}

TEST_CASE("discriminator_loss: all-zero G and D score -beta") {
  auto cfg = tiny_config();
  auto p = random_params(cfg, 2, 21);
  for (const auto& name : GanParams<double>::names()) p.by_name(name).setZero();
  SeededRng rng(22);
  MatXd x = rng.gaussian_matrix(4, cfg.feature_dim);
  MatXd z = rng.gaussian_matrix(4, cfg.noise_dim);
  MatXd cond = rng.gaussian_matrix(4, 2);
  VecXd eps = VecXd::Constant(4, 0.5);
  CHECK(discriminator_loss(x, z, cond, eps, p, 10.0) == doctest::Approx(-10.0));
}

TEST_CASE("discriminator_loss: identical real and fake batches cancel the Wasserstein terms") {
  auto cfg = tiny_config();
  auto p = random_params(cfg, 2, 23);
  SeededRng rng(24);
  MatXd z = rng.gaussian_matrix(4, cfg.noise_dim);
  MatXd cond = rng.gaussian_matrix(4, 2);
  MatXd x = generate(z, cond, p);  // real batch set equal to the fake batch
  VecXd eps = VecXd::Constant(4, 0.5);
  CHECK(discriminator_loss(x, z, cond, eps, p, 0.0) == 0.0);
}

TEST_CASE("discriminator_loss: term-by-term oracle within 1e-8") {
  auto cfg = tiny_config();
  SeededRng rng(25);
  for (int trial = 0; trial < 10; ++trial) {
    auto p = random_params(cfg, 2, 60 + static_cast<std::uint64_t>(trial));
    MatXd x = rng.gaussian_matrix(3, cfg.feature_dim);
    MatXd z = rng.gaussian_matrix(3, cfg.noise_dim);
    MatXd cond = rng.gaussian_matrix(3, 2);
    VecXd eps(3);
    for (Index i = 0; i < 3; ++i) eps(i) = rng.uniform();

    MatXd xh = generate(z, cond, p);
    double real_sum = 0.0, fake_sum = 0.0, gp_sum = 0.0;
    const double h = 1e-6;
    for (Index r = 0; r < 3; ++r) {
      real_sum += critic(MatXd(x.row(r)), MatXd(cond.row(r)), p)(0, 0);
      fake_sum += critic(MatXd(xh.row(r)), MatXd(cond.row(r)), p)(0, 0);
      VecXd xt = (eps(r) * x.row(r) + (1.0 - eps(r)) * xh.row(r)).transpose();
      VecXd grad(cfg.feature_dim);
      for (Index c = 0; c < cfg.feature_dim; ++c) {
        VecXd plus = xt, minus = xt;
        plus(c) += h;
        minus(c) -= h;
        grad(c) = (critic(MatXd(plus.transpose()), MatXd(cond.row(r)), p)(0, 0) -
                   critic(MatXd(minus.transpose()), MatXd(cond.row(r)), p)(0, 0)) /
                  (2 * h);
      }
      gp_sum += std::pow(grad.norm() - 1.0, 2.0);
    }
    const double want = real_sum / 3.0 - fake_sum / 3.0 - 10.0 * gp_sum / 3.0;
    CHECK(discriminator_loss(x, z, cond, eps, p, 10.0) == doctest::Approx(want).epsilon(1e-8));
  }
}

TEST_CASE("discriminator_loss: negative beta is a config error") {
  auto cfg = tiny_config();
  auto p = random_params(cfg, 2, 26);
  CHECK_THROWS_AS((void)discriminator_loss(MatXd(MatXd::Zero(1, cfg.feature_dim)),
                                           MatXd(MatXd::Zero(1, cfg.noise_dim)),
                                           MatXd(MatXd::Zero(1, 2)), VecXd(VecXd::Zero(1)), p,
                                           -1.0),
                  ConfigError);
}

TEST_CASE("one critic step increases the Wasserstein gap on a frozen batch") {
  // lambda = 0, beta = 0, lr 1e-4 on a fixed batch.
  GanConfig cfg = tiny_config();
  cfg.beta_gp = 0.0;
  SeededRng rng(27);
  const Index batch = 6, embed = 2;
  auto cs = build_critic_step<double>(cfg, embed, batch);

  auto p = random_params(cfg, embed, 28);
  ad::ParameterSet<double> params;
  for (const auto& name : {"d.w1", "d.b1", "d.w2", "d.b2"})
    params.insert(name, p.by_name(name));

  MatXd x_real = rng.gaussian_matrix(batch, cfg.feature_dim);
  MatXd x_fake = rng.gaussian_matrix(batch, cfg.feature_dim);
  MatXd cond = rng.gaussian_matrix(batch, embed);
  MatXd x_tilde = interpolate(x_real, x_fake, VecXd(VecXd::Constant(batch, 0.5)));

  auto gap = [&]() {
    ad::Evaluator<double> ev(*cs.graph);
    ev.bind(params);
    ev.bind("x_real", x_real);
    ev.bind("x_fake", x_fake);
    ev.bind("x_tilde", x_tilde);
    ev.bind("cond", cond);
    return ev.value(cs.wasserstein)(0, 0);
  };

  const double before = gap();
  {
    ad::Evaluator<double> ev(*cs.graph);
    ev.bind(params);
    ev.bind("x_real", x_real);
    ev.bind("x_fake", x_fake);
    ev.bind("x_tilde", x_tilde);
    ev.bind("cond", cond);
    std::map<std::string, MatXd> grads;
    for (std::size_t i = 0; i < cs.param_names.size(); ++i)
      grads[cs.param_names[i]] = ev.value(cs.param_grads[i]);
    AdamOptimizer<double> adam(1e-4, 0.5, 0.9);
    adam.step(params, grads);
  }
  CHECK(gap() > before);
}

TEST_CASE("pretrain: zero epochs gives the uniform softmax") {
  SeededRng rng(29);
  FeatureSet seen = cluster("a", VecXd::Ones(3), 5, 0.2, rng);
  seen.append(cluster("b", VecXd(-VecXd::Ones(3)), 5, 0.2, rng));
  GanConfig cfg;
  cfg.pretrain_epochs = 0;
  auto cls = pretrain_seen_classifier<double>(seen, {"a", "b"}, cfg);
  VecXd p = predict_proba(cls, rng.gaussian_matrix(3, 1));
  CHECK(p(0) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("pretrain: separable clusters reach 0.99 training accuracy") {
  SeededRng rng(30);
  VecXd m1(2), m2(2);
  m1 << 4.0, 0.0;
  m2 << -4.0, 0.0;
  FeatureSet seen = cluster("a", m1, 100, 1.0, rng);
  seen.append(cluster("b", m2, 100, 1.0, rng));
  GanConfig cfg;
  auto cls = pretrain_seen_classifier<double>(seen, {"a", "b"}, cfg);
  Index hits = 0;
  for (Index r = 0; r < seen.rows(); ++r)
    if (predict_topk(cls, seen.x.row(r).transpose(), 1)[0] ==
        seen.labels[static_cast<std::size_t>(r)])
      ++hits;
  CHECK(static_cast<double>(hits) / static_cast<double>(seen.rows()) >= 0.99);
}

TEST_CASE("train_gan: zero epochs returns the initialization") {
  auto cfg = tiny_config();
  cfg.epochs = 0;
  cfg.lambda_cls = 0.0;
  SeededRng rng(31);
  FeatureSet seen = cluster("a", VecXd::Ones(cfg.feature_dim), 8, 0.3, rng);
  seen.append(cluster("b", VecXd(2.0 * VecXd::Ones(cfg.feature_dim)), 8, 0.3, rng));
  auto table = table_for({"a", "b"}, 2, 32);

  auto ck = train_gan<float>(seen, table, cfg);
  SeededRng init_rng(SeededRng::derive(cfg.seed, 0x6A11));
  auto want = init_gan_params<float>(cfg, 2, init_rng);
  for (const auto& [name, value] : ck.params)
    CHECK((value - want.by_name(name).cast<float>()).cwiseAbs().maxCoeff() == 0.0f);
  CHECK(ck.epoch == 0);
}

TEST_CASE("train_gan: same seed twice is bitwise identical; missing embedding rejected") {
  auto cfg = tiny_config();
  SeededRng rng(33);
  FeatureSet seen = cluster("a", VecXd::Ones(cfg.feature_dim), 8, 0.3, rng);
  seen.append(cluster("b", VecXd(2.0 * VecXd::Ones(cfg.feature_dim)), 8, 0.3, rng));
  auto table = table_for({"a", "b"}, 2, 34);

  GanTrainingLog log1, log2;
  auto ck1 = train_gan<float>(seen, table, cfg, &log1);
  auto ck2 = train_gan<float>(seen, table, cfg, &log2);
  for (std::size_t i = 0; i < ck1.params.size(); ++i) {
    CHECK(ck1.params[i].first == ck2.params[i].first);
    CHECK((ck1.params[i].second - ck2.params[i].second).cwiseAbs().maxCoeff() == 0.0f);
  }
  CHECK(ck1.rng_state == ck2.rng_state);
  CHECK(log1.generator_loss == log2.generator_loss);

  auto incomplete = table_for({"a"}, 2, 34);
  CHECK_THROWS_AS((void)train_gan<float>(seen, incomplete, cfg), ValidationError);
}

TEST_CASE("train_gan: checkpoint file round-trips and resume reproduces the next step") {
  auto cfg = tiny_config();
  cfg.epochs = 4;
  SeededRng rng(35);
  FeatureSet seen = cluster("a", VecXd::Ones(cfg.feature_dim), 8, 0.3, rng);
  seen.append(cluster("b", VecXd(2.0 * VecXd::Ones(cfg.feature_dim)), 8, 0.3, rng));
  auto table = table_for({"a", "b"}, 2, 36);

  GanTrainingLog full_log;
  (void)train_gan<float>(seen, table, cfg, &full_log);

  GanConfig half = cfg;
  half.epochs = 2;
  auto ck = train_gan<float>(seen, table, half);

  const auto path = std::filesystem::temp_directory_path() / "kgzsl_ck_test.bin";
  ck.embeddings_digest = "abc";
  save_checkpoint(ck, path);
  auto back = load_checkpoint(path);
  std::filesystem::remove(path);
  CHECK(back.epoch == 2);
  CHECK(back.embeddings_digest == "abc");
  CHECK(back.rng_state == ck.rng_state);
  CHECK(back.config.lambda_cls == cfg.lambda_cls);
  for (std::size_t i = 0; i < ck.params.size(); ++i)
    CHECK((back.params[i].second - ck.params[i].second).cwiseAbs().maxCoeff() == 0.0f);
  CHECK(back.seen_classifier.labels == ck.seen_classifier.labels);

  GanConfig rest = cfg;  // continue to epoch 4
  GanTrainingLog resumed_log;
  (void)train_gan<float>(seen, table, rest, &resumed_log, &back);

  // The first critic evaluation after the boundary depends only on
  // parameters and RNG state, both restored exactly.
  const Index iters = std::max<Index>(1, seen.rows() / cfg.batch_size);
  const std::size_t boundary =
      static_cast<std::size_t>(2 * iters * cfg.critic_steps);
  REQUIRE(full_log.critic_objective.size() >
          boundary);  // 4-epoch run recorded past the boundary
  CHECK(resumed_log.critic_objective.front() == full_log.critic_objective[boundary]);
  CHECK(resumed_log.penalty.front() == full_log.penalty[boundary]);
}

TEST_CASE("train_gan: periodic checkpoints are emitted") {
  auto cfg = tiny_config();
  cfg.epochs = 4;
  cfg.checkpoint_every = 2;
  SeededRng rng(37);
  FeatureSet seen = cluster("a", VecXd::Ones(cfg.feature_dim), 8, 0.3, rng);
  seen.append(cluster("b", VecXd(2.0 * VecXd::Ones(cfg.feature_dim)), 8, 0.3, rng));
  auto table = table_for({"a", "b"}, 2, 38);
  std::vector<GanCheckpoint> periodic;
  auto ck = train_gan<float>(seen, table, cfg, nullptr, nullptr, &periodic);
  REQUIRE(periodic.size() == 1);
  CHECK(periodic[0].epoch == 2);
  CHECK(ck.epoch == 4);
}

TEST_CASE("synthesize: counts, empty case, shared-stream determinism") {
  auto cfg = tiny_config();
  cfg.lambda_cls = 0.0;
  cfg.epochs = 0;
  SeededRng rng(39);
  FeatureSet seen = cluster("s", VecXd::Ones(cfg.feature_dim), 4, 0.3, rng);
  std::vector<std::string> unseen;
  for (int i = 0; i < 25; ++i)
    unseen.push_back("u" + std::string(i < 10 ? "0" : "") + std::to_string(i));
  std::vector<std::string> everyone = unseen;
  everyone.push_back("s");
  auto table = table_for(everyone, 2, 40);
  auto ck = train_gan<float>(seen, table, cfg);

  auto fs = synthesize_unseen(ck, table, unseen, 300, 7);
  CHECK(fs.rows() == 7500);  // 25 classes x 300
  CHECK(fs.dim() == cfg.feature_dim);
  for (auto p : fs.provenance) CHECK(p == Provenance::kSynthetic);

  auto empty = synthesize_unseen(ck, table, unseen, 0, 7);
  CHECK(empty.rows() == 0);
  CHECK(empty.dim() == cfg.feature_dim);

  // Same checkpoint and seed give an identical digest.
  auto fs2 = synthesize_unseen(ck, table, unseen, 300, 7);
  CHECK(fs.digest() == fs2.digest());

  // Two classes with identical embeddings and a shared noise stream map to
  // identical features.
  VecXd shared = table.embedding("u00");
  auto a = synthesize_for_class(ck, "x", shared, 10, 99);
  auto b = synthesize_for_class(ck, "y", shared, 10, 99);
  CHECK((a.x - b.x).cwiseAbs().maxCoeff() == 0.0);

  CHECK_THROWS_AS((void)synthesize_unseen(ck, table, {"missing"}, 5, 7), ValidationError);
}
