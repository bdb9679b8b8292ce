#pragma once

#include "kgzsl/autodiff.hpp"
#include "kgzsl/common.hpp"

#include <cmath>
#include <map>
#include <string>

namespace kgzsl {

// Adaptive-moment gradient descent. Parameters update in sorted-name order,
// so runs are reproducible.
template <class Scalar>
class AdamOptimizer {
 public:
  AdamOptimizer(Scalar lr, Scalar beta1 = Scalar(0.9), Scalar beta2 = Scalar(0.999),
                Scalar eps = Scalar(1e-8))
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ad::ParameterSet<Scalar>& params, const std::map<std::string, MatX<Scalar>>& grads) {
    ++t_;
    const Scalar bc1 = Scalar(1) - std::pow(beta1_, static_cast<Scalar>(t_));
    const Scalar bc2 = Scalar(1) - std::pow(beta2_, static_cast<Scalar>(t_));
    for (const auto& [name, g] : grads) {
      auto& [m, v] = moments_.try_emplace(name, MatX<Scalar>::Zero(g.rows(), g.cols()),
                                          MatX<Scalar>::Zero(g.rows(), g.cols()))
                         .first->second;
      m = beta1_ * m + (Scalar(1) - beta1_) * g;
      v = (beta2_ * v).eval();
      v.array() += (Scalar(1) - beta2_) * g.array().square();
      MatX<Scalar> update =
          (lr_ * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps_)).matrix();
      params.update(name, params.at(name) - update);
    }
  }

 private:
  Scalar lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::map<std::string, std::pair<MatX<Scalar>, MatX<Scalar>>> moments_;
};

// Plain full-batch gradient descent.
template <class Scalar>
class SgdOptimizer {
 public:
  explicit SgdOptimizer(Scalar lr) : lr_(lr) {}

  void step(ad::ParameterSet<Scalar>& params, const std::map<std::string, MatX<Scalar>>& grads) {
    for (const auto& [name, g] : grads) params.update(name, params.at(name) - lr_ * g);
  }

 private:
  Scalar lr_;
};

}  // namespace kgzsl
