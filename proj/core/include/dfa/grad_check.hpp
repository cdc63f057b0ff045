#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "dfa/graph.hpp"
#include "dfa/network.hpp"

namespace dfa::ad {

struct GradCheckOptions {
  // Check at most this many randomly chosen coordinates; 0 checks all.
  std::size_t max_coordinates = 0;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  // Coordinates whose +/- epsilon probes straddle a ReLU or max-pool kink.
  std::size_t skipped_kinks = 0;
  std::string worst_parameter;
};

// Builds a scalar loss over the given parameters (registered by reference).
using LossBuilder = std::function<NodeId(Graph&)>;

// Compares backward() against central differences
//   |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)
// over the parameter coordinates. epsilon must lie in [1e-7, 1e-3].
GradCheckReport grad_check(ParameterSet& params, const LossBuilder& build, double epsilon,
                           const GradCheckOptions& options = {});

// Same check against a fixed probe objective touching all three heads.
GradCheckReport grad_check(const StageNetwork& net, const Tensor& input, const Tensor& aux, double epsilon,
                           const GradCheckOptions& options = {});

}  // namespace dfa::ad
