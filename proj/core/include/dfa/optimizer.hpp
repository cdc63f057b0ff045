#pragma once

#include <span>

#include "dfa/graph.hpp"
#include "dfa/network.hpp"

namespace dfa::ad {

// Scalar forms of the two training losses, evaluated through the graph ops.
double euclidean_loss(std::span<const double> pred, std::span<const double> target, std::span<const double> mask);
double multinomial_logistic_loss(std::span<const double> logits, std::span<const int> labels);

// Heavy-ball SGD: v <- momentum * v + g; theta <- theta - lr * v.
class SgdMomentum {
 public:
  SgdMomentum(double learning_rate, double momentum);

  // Throws before touching any parameter if a gradient is non-finite or names
  // an unknown parameter.
  void step(ParameterSet& params, const GradientMap& gradients);

  double learning_rate() const noexcept { return lr_; }
  double momentum() const noexcept { return momentum_; }
  const GradientMap& velocity() const noexcept { return velocity_; }

 private:
  double lr_;
  double momentum_;
  GradientMap velocity_;
};

}  // namespace dfa::ad
