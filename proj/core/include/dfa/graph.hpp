#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dfa/tensor.hpp"

namespace dfa::ad {

using NodeId = std::size_t;
using GradientMap = std::map<std::string, Tensor>;

enum class OpKind {
  Input,
  Parameter,
  Conv2d,
  Relu,
  MaxPool,
  Flatten,
  Concat,
  Dense,
  Add,
  Scale,
  ReduceSum,
  EuclideanLoss,
  LogisticLoss,
};

std::string_view op_name(OpKind kind);

// Tape of tensor operations recorded in topological order. Nodes are appended
// by the builder methods below; backward() walks the tape in reverse.
//
// Parameter nodes reference caller-owned tensors, which must outlive the graph.
class Graph {
 public:
  NodeId input(Tensor value);
  NodeId parameter(std::string name, const Tensor& value);

  // x [B,C,H,W], weight [O,C,k,k], bias [O]; stride 1, zero padding k/2.
  NodeId conv2d(NodeId x, NodeId weight, NodeId bias);
  NodeId relu(NodeId x);
  // Non-overlapping window x window max pooling over the last two axes.
  NodeId max_pool(NodeId x, std::size_t window);
  // [B, ...] -> [B, prod(...)]
  NodeId flatten(NodeId x);
  // Concatenate two [B,F] tensors along the feature axis.
  NodeId concat(NodeId a, NodeId b);
  // x [B,F], weight [O,F], bias [O] -> [B,O]
  NodeId dense(NodeId x, NodeId weight, NodeId bias);
  NodeId add(const std::vector<NodeId>& terms);
  NodeId scale(NodeId x, double factor);
  NodeId reduce_sum(NodeId x);

  // sum(mask * (pred - target)^2) / max(1, sum(mask))
  NodeId euclidean_loss(NodeId pred, Tensor target, Tensor mask);
  // Logits are read as consecutive rows of `classes` entries; the loss is the
  // mean over rows of -log softmax(row)[label].
  NodeId logistic_loss(NodeId logits, std::vector<int> labels, std::size_t classes = 3);

  const Tensor& value(NodeId id) const;
  const Tensor& grad(NodeId id) const;
  OpKind kind(NodeId id) const { return nodes_.at(id).kind; }
  const std::vector<NodeId>& inputs(NodeId id) const { return nodes_.at(id).inputs; }
  const std::string& parameter_name(NodeId id) const { return nodes_.at(id).name; }
  std::size_t size() const noexcept { return nodes_.size(); }

  // Reverse-mode sweep seeded with d(loss)/d(loss) = 1. The loss node must hold
  // a single value. Gradient buffers are reset on every call.
  void backward(NodeId loss);
  // Gradients of every parameter node, keyed by parameter name. Parameters the
  // loss does not depend on carry exact zeros.
  GradientMap parameter_gradients() const;

  // Hash of every ReLU sign pattern and max-pool winner; changes whenever an
  // input crosses a non-differentiable point.
  std::uint64_t kink_signature() const;

 private:
  struct Node {
    Node(OpKind k, std::vector<NodeId> in) : kind(k), inputs(std::move(in)) {}

    OpKind kind;
    std::vector<NodeId> inputs;
    Tensor owned;
    const Tensor* external = nullptr;
    Tensor grad;
    bool requires_grad = false;
    std::string name;
    double scalar = 0.0;
    std::size_t window = 0;
    std::vector<double> scratch;   // softmax probabilities
    std::vector<std::size_t> index;  // pool winners
    Tensor target;
    Tensor mask;
    std::vector<int> labels;

    const Tensor& val() const { return external ? *external : owned; }
  };

  NodeId push(Node node);
  void accumulate(NodeId id, const Tensor& g);
  Tensor& grad_buffer(NodeId id);
  void backward_node(NodeId id);

  std::vector<Node> nodes_;
};

// Free-function form of Graph::backward returning the parameter gradients.
GradientMap backward(Graph& graph, NodeId loss);

}  // namespace dfa::ad
