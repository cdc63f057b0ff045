#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dfa/graph.hpp"
#include "dfa/tensor.hpp"

namespace dfa::ad {

// Layer layout of a stage regressor: a conv/ReLU/pool trunk, one dense hidden
// layer fed by the flattened trunk concatenated with auxiliary inputs, then
// three heads (2N positions, N x 3 visibility logits, K pseudo-labels).
struct ArchDescriptor {
  std::size_t image_height = 64;
  std::size_t image_width = 64;
  std::size_t channels = 1;
  std::vector<std::size_t> conv_channels{8, 16};
  std::size_t kernel = 3;
  std::size_t pool = 2;
  std::size_t dense_width = 128;
  std::size_t aux_length = 0;
  std::size_t landmarks = 8;
  std::size_t clusters = 20;

  std::size_t trunk_features() const;
  void validate() const;
  std::string to_string() const;
  static ArchDescriptor parse(const std::string& text);

  friend bool operator==(const ArchDescriptor&, const ArchDescriptor&) = default;
};

using ParameterSet = std::map<std::string, Tensor>;

struct HeadNodes {
  NodeId positions;
  NodeId visibility_logits;
  NodeId pseudolabels;
};

struct HeadValues {
  Tensor positions;          // [B, 2N]
  Tensor visibility_logits;  // [B, 3N], row-major N x 3 per sample
  Tensor pseudolabels;       // [B, K]
};

class StageNetwork {
 public:
  StageNetwork() = default;
  StageNetwork(ArchDescriptor arch, ParameterSet params);

  // Glorot-uniform weights, zero biases.
  static StageNetwork initialize(const ArchDescriptor& arch, std::uint64_t seed);
  static StageNetwork zeros(const ArchDescriptor& arch);

  const ArchDescriptor& arch() const noexcept { return arch_; }
  const ParameterSet& parameters() const noexcept { return params_; }
  ParameterSet& parameters() noexcept { return params_; }
  std::size_t parameter_count() const;

  // Records the forward pass into `graph`. `images` is [B,C,H,W]; `aux` is
  // [B, aux_length] and ignored when aux_length is zero.
  HeadNodes forward(Graph& graph, const Tensor& images, const Tensor& aux) const;
  // Graph-free evaluation; safe to call concurrently on a shared network.
  HeadValues evaluate(const Tensor& images, const Tensor& aux) const;

 private:
  ArchDescriptor arch_;
  ParameterSet params_;
};

// Expected parameter shapes for an architecture, in name order.
std::map<std::string, Shape> parameter_shapes(const ArchDescriptor& arch);

}  // namespace dfa::ad
