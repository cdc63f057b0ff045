#include "dfa/optimizer.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace dfa::ad {

double euclidean_loss(std::span<const double> pred, std::span<const double> target, std::span<const double> mask) {
  if (pred.size() != target.size() || pred.size() != mask.size())
    throw std::invalid_argument("euclidean_loss: length mismatch");
  if (pred.empty()) return 0.0;
  Graph g;
  const Shape s{pred.size()};
  const NodeId p = g.input(Tensor(s, {pred.begin(), pred.end()}));
  const NodeId l = g.euclidean_loss(p, Tensor(s, {target.begin(), target.end()}), Tensor(s, {mask.begin(), mask.end()}));
  return g.value(l)[0];
}

double multinomial_logistic_loss(std::span<const double> logits, std::span<const int> labels) {
  if (labels.empty()) throw std::invalid_argument("multinomial_logistic_loss: no labels");
  Graph g;
  const NodeId z = g.input(Tensor({logits.size()}, {logits.begin(), logits.end()}));
  const NodeId l = g.logistic_loss(z, std::vector<int>(labels.begin(), labels.end()));
  return g.value(l)[0];
}

SgdMomentum::SgdMomentum(double learning_rate, double momentum) : lr_(learning_rate), momentum_(momentum) {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw std::invalid_argument("sgd: learning rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("sgd: momentum must be in [0, 1)");
}

void SgdMomentum::step(ParameterSet& params, const GradientMap& gradients) {
  for (const auto& [name, g] : gradients) {
    auto it = params.find(name);
    if (it == params.end()) throw std::invalid_argument("sgd: gradient for unknown parameter " + name);
    if (it->second.shape() != g.shape()) throw std::invalid_argument("sgd: gradient shape mismatch for " + name);
    if (!g.all_finite()) throw std::runtime_error("sgd: non-finite gradient in parameter " + name);
  }
  for (const auto& [name, g] : gradients) {
    Tensor& theta = params.at(name);
    auto vit = velocity_.find(name);
    if (vit == velocity_.end()) vit = velocity_.emplace(name, Tensor(g.shape(), 0.0)).first;
    Tensor& v = vit->second;
    for (std::size_t i = 0; i < g.size(); ++i) {
      v[i] = momentum_ * v[i] + g[i];
      theta[i] -= lr_ * v[i];
    }
  }
}

}  // namespace dfa::ad
