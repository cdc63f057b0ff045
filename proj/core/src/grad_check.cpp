#include "dfa/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

namespace dfa::ad {

GradCheckReport grad_check(ParameterSet& params, const LossBuilder& build, double epsilon,
                           const GradCheckOptions& options) {
  if (!(epsilon >= 1e-7 && epsilon <= 1e-3)) throw std::invalid_argument("grad_check: epsilon outside [1e-7, 1e-3]");

  GradientMap analytic;
  std::uint64_t base_signature = 0;
  {
    Graph g;
    const NodeId loss = build(g);
    analytic = backward(g, loss);
    base_signature = g.kink_signature();
  }

  struct Coord {
    const std::string* name;
    std::size_t index;
  };
  std::vector<Coord> coords;
  for (auto& [name, t] : params)
    for (std::size_t i = 0; i < t.size(); ++i) coords.push_back({&name, i});
  if (options.max_coordinates > 0 && coords.size() > options.max_coordinates) {
    std::mt19937_64 gen(options.seed);
    std::shuffle(coords.begin(), coords.end(), gen);
    coords.resize(options.max_coordinates);
  }

  auto probe = [&](std::uint64_t& signature) {
    Graph g;
    const NodeId loss = build(g);
    signature = g.kink_signature();
    return g.value(loss)[0];
  };

  GradCheckReport report;
  for (const Coord& c : coords) {
    double& theta = params.at(*c.name)[c.index];
    const double saved = theta;
    std::uint64_t sig_plus = 0, sig_minus = 0;
    theta = saved + epsilon;
    const double plus = probe(sig_plus);
    theta = saved - epsilon;
    const double minus = probe(sig_minus);
    theta = saved;
    if (sig_plus != base_signature || sig_minus != base_signature) {
      ++report.skipped_kinks;
      continue;
    }
    const double numeric = (plus - minus) / (2.0 * epsilon);
    auto it = analytic.find(*c.name);
    const double a = it == analytic.end() ? 0.0 : it->second[c.index];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    const double err = std::abs(a - numeric) / denom;
    ++report.checked;
    if (err > report.max_relative_error) {
      report.max_relative_error = err;
      report.worst_parameter = *c.name + "[" + std::to_string(c.index) + "]";
    }
  }
  return report;
}

GradCheckReport grad_check(const StageNetwork& net, const Tensor& input, const Tensor& aux, double epsilon,
                           const GradCheckOptions& options) {
  const ArchDescriptor& arch = net.arch();
  const std::size_t batch = input.rank() > 0 ? input.dim(0) : 0;
  std::mt19937_64 gen(options.seed ^ 0x5eedULL);
  std::uniform_real_distribution<double> unit(-0.5, 0.5);
  Tensor pos_target({batch, 2 * arch.landmarks}), pos_mask({batch, 2 * arch.landmarks}, 1.0);
  for (double& v : pos_target.values()) v = unit(gen);
  for (std::size_t i = 0; i < pos_mask.size(); i += 7) pos_mask[i] = 0.0;
  std::vector<int> labels(batch * arch.landmarks);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(gen() % 3);
  Tensor label_target({batch, arch.clusters});
  for (double& v : label_target.values()) v = 0.5 + unit(gen);

  StageNetwork probe = net;
  LossBuilder build = [&](Graph& g) {
    const HeadNodes h = probe.forward(g, input, aux);
    const NodeId lp = g.euclidean_loss(h.positions, pos_target, pos_mask);
    const NodeId lv = g.logistic_loss(h.visibility_logits, labels);
    const NodeId ll = g.euclidean_loss(h.pseudolabels, label_target, Tensor(label_target.shape(), 1.0));
    return g.add({lp, g.scale(lv, 0.7), g.scale(ll, 1.3)});
  };
  return grad_check(probe.parameters(), build, epsilon, options);
}

}  // namespace dfa::ad
