#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "kgzsl/classifier.hpp"
#include "kgzsl/rng.hpp"
#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <set>

using namespace kgzsl;

namespace {

FeatureSet gaussian_clusters(const std::vector<std::pair<std::string, VecXd>>& means,
                             Index per_class, double sigma, SeededRng& rng,
                             Provenance prov = Provenance::kSeen) {
  const Index dim = means.front().second.size();
  FeatureSet fs;
  fs.x.resize(per_class * static_cast<Index>(means.size()), dim);
  Index r = 0;
  for (const auto& [name, mean] : means) {
    for (Index i = 0; i < per_class; ++i, ++r) {
      fs.x.row(r) = (mean + sigma * VecXd(rng.gaussian_matrix(dim, 1))).transpose();
      fs.labels.push_back(name);
      fs.provenance.push_back(prov);
    }
  }
  return fs;
}

double accuracy(const SoftmaxClassifier& clf, const FeatureSet& fs) {
  Index hits = 0;
  for (Index r = 0; r < fs.rows(); ++r)
    if (predict_topk(clf, fs.x.row(r).transpose(), 1)[0] == fs.labels[static_cast<std::size_t>(r)])
      ++hits;
  return static_cast<double>(hits) / static_cast<double>(fs.rows());
}

FeatureSet synthetic_rows(const std::vector<std::string>& classes, Index per_class, Index dim,
                          SeededRng& rng) {
  std::vector<std::pair<std::string, VecXd>> means;
  for (const auto& c : classes) means.emplace_back(c, VecXd(rng.gaussian_matrix(dim, 1)));
  return gaussian_clusters(means, per_class, 0.3, rng, Provenance::kSynthetic);
}

}  // namespace

TEST_CASE("assemble: ZSL keeps only synthetic rows and their label set") {
  SeededRng rng(1);
  auto synth = synthetic_rows({"u1", "u2"}, 10, 4, rng);
  auto seen = gaussian_clusters({{"s1", VecXd::Zero(4)}}, 5, 0.1, rng);

  auto zsl = assemble_training_set(Mode::kZsl, seen, synth);
  CHECK(zsl.features.rows() == 20);
  CHECK(zsl.label_set == std::vector<std::string>{"u1", "u2"});
  // Real rows are ignored entirely in ZSL mode.
  auto zsl_no_seen = assemble_training_set(Mode::kZsl, FeatureSet{}, synth);
  CHECK(zsl.features.x == zsl_no_seen.features.x);
  CHECK(zsl.features.labels == zsl_no_seen.features.labels);
  for (auto p : zsl.features.provenance) CHECK(p == Provenance::kSynthetic);
}

TEST_CASE("assemble: GZSL unions real seen and synthetic unseen") {
  SeededRng rng(2);
  std::vector<std::pair<std::string, VecXd>> seen_means;
  for (const char* n : {"s1", "s2", "s3"})
    seen_means.emplace_back(n, VecXd(rng.gaussian_matrix(4, 1)));
  auto seen = gaussian_clusters(seen_means, 5, 0.1, rng);
  auto synth = synthetic_rows({"u1", "u2"}, 10, 4, rng);

  auto gzsl = assemble_training_set(Mode::kGzsl, seen, synth);
  CHECK(gzsl.features.rows() == 35);
  CHECK(gzsl.label_set.size() == 5);
  CHECK(std::count(gzsl.features.provenance.begin(), gzsl.features.provenance.end(),
                   Provenance::kSeen) == 15);

  CHECK_THROWS_AS((void)assemble_training_set(Mode::kGzsl, FeatureSet{}, synth), UsageError);
  CHECK_THROWS_AS((void)assemble_training_set(Mode::kZsl, seen, FeatureSet{}), UsageError);
}

TEST_CASE("train_softmax: loss at theta zero is exactly log |Y|") {
  SeededRng rng(3);
  auto data = synthetic_rows({"a", "b", "c"}, 4, 3, rng);
  SoftmaxHyper hyper;
  hyper.epochs = 1;
  std::vector<double> log;
  (void)train_softmax<double>(data, {"a", "b", "c"}, hyper, &log);
  REQUIRE(log.size() == 1);
  CHECK(log[0] == doctest::Approx(std::log(3.0)).epsilon(1e-12));
}

TEST_CASE("train_softmax: separable two-class toy reaches 0.99 training accuracy") {
  SeededRng rng(4);
  VecXd m1 = VecXd::Zero(2), m2 = VecXd::Zero(2);
  m1 << 3.0, 0.0;
  m2 << -3.0, 0.5;
  auto data = gaussian_clusters({{"a", m1}, {"b", m2}}, 100, 1.0, rng);
  SoftmaxHyper hyper;
  hyper.epochs = 200;
  hyper.learning_rate = 0.1;
  auto clf = train_softmax<double>(data, {"a", "b"}, hyper);
  CHECK(accuracy(clf, data) >= 0.99);
}

TEST_CASE("train_softmax: duplicating every sample leaves the training path unchanged") {
  SeededRng rng(5);
  auto data = synthetic_rows({"a", "b"}, 6, 3, rng);
  FeatureSet doubled = data;
  doubled.append(data);
  SoftmaxHyper hyper;
  hyper.epochs = 50;
  auto clf1 = train_softmax<double>(data, {"a", "b"}, hyper);
  auto clf2 = train_softmax<double>(doubled, {"a", "b"}, hyper);
  CHECK((clf1.theta - clf2.theta).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("train_softmax: gradient matches finite differences on a random 3-class instance") {
  SeededRng rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const Index dim = 4, rows = 9;
    MatXd x = rng.gaussian_matrix(rows, dim);
    std::vector<Index> y;
    for (Index r = 0; r < rows; ++r) y.push_back(static_cast<Index>(rng.uniform_int(0, 2)));
    auto lg = build_softmax_loss<double>(x, y, 3);

    const MatXd theta0 = rng.gaussian_matrix(3, dim);
    ad::Evaluator<double> ev(*lg.graph);
    ev.bind("theta", theta0);
    const MatXd analytic = ev.value(lg.grad);

    auto probe = [&](const MatXd& th) {
      // Independent oracle: direct mean NLL.
      double total = 0.0;
      for (Index r = 0; r < rows; ++r) {
        VecXd s = th * x.row(r).transpose();
        const double m = s.maxCoeff();
        const double lse = m + std::log((s.array() - m).exp().sum());
        total += lse - s(y[static_cast<std::size_t>(r)]);
      }
      return total / static_cast<double>(rows);
    };
    const MatXd fd = oracle::finite_difference(probe, theta0);
    CHECK(oracle::max_rel_err(analytic, fd) <= 1e-4);
  }
}

TEST_CASE("train_softmax: single-label input is a usage error") {
  SeededRng rng(7);
  auto data = synthetic_rows({"only"}, 5, 3, rng);
  SoftmaxHyper hyper;
  CHECK_THROWS_AS((void)train_softmax<double>(data, {"only", "other"}, hyper), UsageError);
  CHECK_THROWS_AS((void)train_softmax<double>(data, {"only"}, hyper), UsageError);
}

TEST_CASE("train_softmax: loss is non-increasing under plain descent at lr 1e-3") {
  SeededRng rng(8);
  auto data = synthetic_rows({"a", "b", "c"}, 10, 3, rng);
  SoftmaxHyper hyper;
  hyper.optimizer = SoftmaxHyper::Optimizer::kGd;
  hyper.learning_rate = 1e-3;
  hyper.epochs = 120;
  std::vector<double> log;
  (void)train_softmax<double>(data, {"a", "b", "c"}, hyper, &log);
  for (std::size_t i = 1; i < log.size(); ++i) CHECK(log[i] <= log[i - 1] + 1e-15);
}

TEST_CASE("predict_topk: axis-aligned construction and tie-breaking") {
  auto clf = make_softmax_classifier({"l0", "l1", "l2"}, MatXd(MatXd::Identity(3, 3)));
  VecXd x(3);
  x << 0.0, 0.0, 1.0;
  CHECK(predict_topk(clf, x, 1)[0] == "l2");

  auto zero = make_softmax_classifier({"l0", "l1", "l2"}, MatXd(MatXd::Zero(3, 3)));
  auto ranked = predict_topk(zero, x, 3);
  CHECK(ranked == std::vector<std::string>{"l0", "l1", "l2"});
  CHECK_THROWS_AS((void)predict_topk(zero, x, 4), UsageError);
  CHECK_THROWS_AS((void)predict_topk(zero, x, 0), UsageError);
}

TEST_CASE("predict_topk: matches a brute-force sort of the scores") {
  SeededRng rng(9);
  for (int trial = 0; trial < 30; ++trial) {
    const Index labels = 6, dim = 4;
    std::vector<std::string> names;
    for (Index i = 0; i < labels; ++i) names.push_back("l" + std::to_string(i));
    auto clf = make_softmax_classifier(names, rng.gaussian_matrix(labels, dim));
    VecXd x = rng.gaussian_matrix(dim, 1);

    VecXd s = clf.theta * x;
    std::vector<std::pair<double, Index>> scored;
    for (Index i = 0; i < labels; ++i) scored.emplace_back(-s(i), i);
    std::sort(scored.begin(), scored.end());
    auto ranked = predict_topk(clf, x, labels);
    for (Index i = 0; i < labels; ++i)
      CHECK(ranked[static_cast<std::size_t>(i)] ==
            names[static_cast<std::size_t>(scored[static_cast<std::size_t>(i)].second)]);
  }
}

TEST_CASE("softmax probabilities are positive and sum to one within 1e-12") {
  SeededRng rng(10);
  for (int trial = 0; trial < 50; ++trial) {
    auto clf = make_softmax_classifier({"a", "b", "c", "d"},
                                       MatXd(5.0 * rng.gaussian_matrix(4, 3)));
    VecXd p = predict_proba(clf, rng.gaussian_matrix(3, 1));
    CHECK(p.minCoeff() > 0.0);
    CHECK(std::abs(p.sum() - 1.0) <= 1e-12);
  }
}

TEST_CASE("rankings are invariant to adding a constant vector to every theta row") {
  SeededRng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Index labels = 5, dim = 3;
    std::vector<std::string> names;
    for (Index i = 0; i < labels; ++i) names.push_back("l" + std::to_string(i));
    MatXd theta = rng.gaussian_matrix(labels, dim);
    VecXd shift_row = rng.gaussian_matrix(dim, 1);
    MatXd shifted = theta + VecXd::Ones(labels) * shift_row.transpose();
    VecXd x = rng.gaussian_matrix(dim, 1);
    // The shared shift moves every score by the same amount.
    auto a = predict_topk(make_softmax_classifier(names, theta), x, labels);
    auto b = predict_topk(make_softmax_classifier(names, shifted), x, labels);
    CHECK(a == b);
  }
}

TEST_CASE("predict_topk with k = |Y| is a permutation of the label set") {
  SeededRng rng(12);
  auto clf = make_softmax_classifier({"a", "b", "c", "d", "e"}, rng.gaussian_matrix(5, 3));
  auto ranked = predict_topk(clf, rng.gaussian_matrix(3, 1), 5);
  std::set<std::string> unique(ranked.begin(), ranked.end());
  CHECK(unique.size() == 5);
}

TEST_CASE("classifier file round-trips") {
  SeededRng rng(13);
  auto clf = make_softmax_classifier({"a", "b"}, rng.gaussian_matrix(2, 4));
  const auto path = std::filesystem::temp_directory_path() / "kgzsl_clf_test.tsv";
  save_classifier(clf, path);
  auto back = load_classifier(path);
  CHECK(back.labels == clf.labels);
  CHECK((back.theta - clf.theta).cwiseAbs().maxCoeff() == 0.0);
  std::filesystem::remove(path);
}
