#include "dfa/graph.hpp"

// Small products would otherwise take Eigen's coefficient-based path, whose
// summation order depends on the buffer address.
#define EIGEN_GEMM_TO_COEFFBASED_THRESHOLD 0
#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace dfa::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;
using MapVec = Eigen::Map<Eigen::VectorXd>;
using ConstMapVec = Eigen::Map<const Eigen::VectorXd>;

[[noreturn]] void shape_error(OpKind kind, const std::string& what) {
  throw std::invalid_argument(std::string(op_name(kind)) + ": " + what);
}

// Output columns x with 0 <= x + dx < width.
std::pair<std::size_t, std::size_t> valid_columns(std::size_t width, std::ptrdiff_t dx) {
  const auto w = static_cast<std::ptrdiff_t>(width);
  const std::ptrdiff_t lo = std::clamp<std::ptrdiff_t>(-dx, 0, w);
  const std::ptrdiff_t hi = std::clamp<std::ptrdiff_t>(w - dx, lo, w);
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

void im2col(const double* image, std::size_t channels, std::size_t height, std::size_t width,
            std::size_t kernel, double* cols) {
  const auto pad = static_cast<std::ptrdiff_t>(kernel / 2);
  const std::size_t plane = height * width;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ky = 0; ky < kernel; ++ky) {
      for (std::size_t kx = 0; kx < kernel; ++kx) {
        double* row = cols + ((c * kernel + ky) * kernel + kx) * plane;
        const auto dy = static_cast<std::ptrdiff_t>(ky) - pad;
        const auto dx = static_cast<std::ptrdiff_t>(kx) - pad;
        for (std::size_t y = 0; y < height; ++y) {
          const auto sy = static_cast<std::ptrdiff_t>(y) + dy;
          double* out = row + y * width;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(height)) {
            std::fill(out, out + width, 0.0);
            continue;
          }
          const double* in = image + c * plane + static_cast<std::size_t>(sy) * width;
          const auto [lo, hi] = valid_columns(width, dx);
          std::fill(out, out + lo, 0.0);
          std::copy(in + (static_cast<std::ptrdiff_t>(lo) + dx), in + (static_cast<std::ptrdiff_t>(hi) + dx), out + lo);
          std::fill(out + hi, out + width, 0.0);
        }
      }
    }
  }
}

void col2im_add(const double* cols, std::size_t channels, std::size_t height, std::size_t width,
                std::size_t kernel, double* image) {
  const auto pad = static_cast<std::ptrdiff_t>(kernel / 2);
  const std::size_t plane = height * width;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ky = 0; ky < kernel; ++ky) {
      for (std::size_t kx = 0; kx < kernel; ++kx) {
        const double* row = cols + ((c * kernel + ky) * kernel + kx) * plane;
        const auto dy = static_cast<std::ptrdiff_t>(ky) - pad;
        const auto dx = static_cast<std::ptrdiff_t>(kx) - pad;
        for (std::size_t y = 0; y < height; ++y) {
          const auto sy = static_cast<std::ptrdiff_t>(y) + dy;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(height)) continue;
          double* out = image + c * plane + static_cast<std::size_t>(sy) * width;
          const double* in = row + y * width;
          const auto [lo, hi] = valid_columns(width, dx);
          double* dst = out + dx;
          for (std::size_t x = lo; x < hi; ++x) dst[x] += in[x];
        }
      }
    }
  }
}

std::uint64_t fnv_mix(std::uint64_t h, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    h ^= (v >> (8 * i)) & 0xffu;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::Input: return "input";
    case OpKind::Parameter: return "parameter";
    case OpKind::Conv2d: return "conv2d";
    case OpKind::Relu: return "relu";
    case OpKind::MaxPool: return "max_pool";
    case OpKind::Flatten: return "flatten";
    case OpKind::Concat: return "concat";
    case OpKind::Dense: return "dense";
    case OpKind::Add: return "add";
    case OpKind::Scale: return "scale";
    case OpKind::ReduceSum: return "reduce_sum";
    case OpKind::EuclideanLoss: return "euclidean_loss";
    case OpKind::LogisticLoss: return "logistic_loss";
  }
  return "unknown";
}

NodeId Graph::push(Node node) {
  for (NodeId in : node.inputs) {
    if (in >= nodes_.size()) throw std::out_of_range("graph: dangling input node");
    node.requires_grad = node.requires_grad || nodes_[in].requires_grad;
  }
  nodes_.push_back(std::move(node));
  return nodes_.size() - 1;
}

const Tensor& Graph::value(NodeId id) const { return nodes_.at(id).val(); }

const Tensor& Graph::grad(NodeId id) const {
  const Node& n = nodes_.at(id);
  if (n.grad.empty()) throw std::logic_error("graph: no gradient recorded for node");
  return n.grad;
}

NodeId Graph::input(Tensor value) {
  Node n{OpKind::Input, {}};
  n.owned = std::move(value);
  return push(std::move(n));
}

NodeId Graph::parameter(std::string name, const Tensor& value) {
  Node n{OpKind::Parameter, {}};
  n.external = &value;
  n.requires_grad = true;
  n.name = std::move(name);
  return push(std::move(n));
}

NodeId Graph::conv2d(NodeId x, NodeId weight, NodeId bias) {
  const Tensor& in = value(x);
  const Tensor& w = value(weight);
  const Tensor& b = value(bias);
  if (in.rank() != 4) shape_error(OpKind::Conv2d, "input must be [B,C,H,W], got " + shape_string(in.shape()));
  if (w.rank() != 4 || w.dim(2) != w.dim(3) || w.dim(2) % 2 == 0)
    shape_error(OpKind::Conv2d, "weight must be [O,C,k,k] with odd k, got " + shape_string(w.shape()));
  if (w.dim(1) != in.dim(1))
    shape_error(OpKind::Conv2d, "weight expects " + std::to_string(w.dim(1)) + " input channels, input has " +
                                    std::to_string(in.dim(1)));
  if (b.size() != w.dim(0)) shape_error(OpKind::Conv2d, "bias length must equal output channels");

  const std::size_t batch = in.dim(0), channels = in.dim(1), height = in.dim(2), width = in.dim(3);
  const std::size_t out_ch = w.dim(0), kernel = w.dim(2);
  const std::size_t plane = height * width, patch = channels * kernel * kernel;

  Node n{OpKind::Conv2d, {x, weight, bias}};
  n.owned = Tensor({batch, out_ch, height, width});
  ConstMapMat wm(w.data(), static_cast<Eigen::Index>(out_ch), static_cast<Eigen::Index>(patch));
  ConstMapVec bv(b.data(), static_cast<Eigen::Index>(out_ch));
  // Columns are rebuilt per sample (and again in backward) to stay cache-sized.
  std::vector<double> buffer(patch * plane);
  double* cols = buffer.data();
  for (std::size_t s = 0; s < batch; ++s) {
    im2col(in.data() + s * channels * plane, channels, height, width, kernel, cols);
    ConstMapMat cm(cols, static_cast<Eigen::Index>(patch), static_cast<Eigen::Index>(plane));
    MapMat om(n.owned.data() + s * out_ch * plane, static_cast<Eigen::Index>(out_ch),
              static_cast<Eigen::Index>(plane));
    om.noalias() = wm * cm;
    om.colwise() += bv;
  }
  return push(std::move(n));
}

NodeId Graph::relu(NodeId x) {
  Node n{OpKind::Relu, {x}};
  n.owned = value(x);
  for (double& v : n.owned.values()) v = v > 0.0 ? v : 0.0;
  return push(std::move(n));
}

NodeId Graph::max_pool(NodeId x, std::size_t window) {
  const Tensor& in = value(x);
  if (in.rank() != 4) shape_error(OpKind::MaxPool, "input must be [B,C,H,W], got " + shape_string(in.shape()));
  if (window == 0 || in.dim(2) < window || in.dim(3) < window)
    shape_error(OpKind::MaxPool, "window larger than input " + shape_string(in.shape()));
  const std::size_t outer = in.dim(0) * in.dim(1), height = in.dim(2), width = in.dim(3);
  const std::size_t oh = height / window, ow = width / window;
  Node n{OpKind::MaxPool, {x}};
  n.window = window;
  n.owned = Tensor({in.dim(0), in.dim(1), oh, ow});
  n.index.resize(n.owned.size());
  std::size_t o = 0;
  if (window == 2) {
    for (std::size_t p = 0; p < outer; ++p) {
      const double* plane = in.data() + p * height * width;
      for (std::size_t y = 0; y < oh; ++y) {
        const double* r0 = plane + 2 * y * width;
        const double* r1 = r0 + width;
        for (std::size_t xo = 0; xo < ow; ++xo, ++o) {
          // Same scan order and tie-break as the general loop below.
          std::size_t best = 2 * y * width + 2 * xo;
          double v = r0[2 * xo];
          if (r0[2 * xo + 1] > v) v = r0[2 * xo + 1], best = 2 * y * width + 2 * xo + 1;
          if (r1[2 * xo] > v) v = r1[2 * xo], best = (2 * y + 1) * width + 2 * xo;
          if (r1[2 * xo + 1] > v) v = r1[2 * xo + 1], best = (2 * y + 1) * width + 2 * xo + 1;
          n.owned[o] = v;
          n.index[o] = p * height * width + best;
        }
      }
    }
    return push(std::move(n));
  }
  for (std::size_t p = 0; p < outer; ++p) {
    const double* plane = in.data() + p * height * width;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xo = 0; xo < ow; ++xo, ++o) {
        std::size_t best = (y * window) * width + xo * window;
        for (std::size_t dy = 0; dy < window; ++dy)
          for (std::size_t dx = 0; dx < window; ++dx) {
            const std::size_t idx = (y * window + dy) * width + xo * window + dx;
            if (plane[idx] > plane[best]) best = idx;
          }
        n.owned[o] = plane[best];
        n.index[o] = p * height * width + best;
      }
    }
  }
  return push(std::move(n));
}

NodeId Graph::flatten(NodeId x) {
  const Tensor& in = value(x);
  Node n{OpKind::Flatten, {x}};
  n.owned = in.reshaped({in.dim(0), in.size() / in.dim(0)});
  return push(std::move(n));
}

NodeId Graph::concat(NodeId a, NodeId b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (ta.rank() != 2 || tb.rank() != 2 || ta.dim(0) != tb.dim(0))
    shape_error(OpKind::Concat, "operands must be [B,F] with equal B, got " + shape_string(ta.shape()) + " and " +
                                    shape_string(tb.shape()));
  const std::size_t rows = ta.dim(0), fa = ta.dim(1), fb = tb.dim(1);
  Node n{OpKind::Concat, {a, b}};
  n.owned = Tensor({rows, fa + fb});
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(ta.data() + r * fa, fa, n.owned.data() + r * (fa + fb));
    std::copy_n(tb.data() + r * fb, fb, n.owned.data() + r * (fa + fb) + fa);
  }
  return push(std::move(n));
}

NodeId Graph::dense(NodeId x, NodeId weight, NodeId bias) {
  const Tensor& in = value(x);
  const Tensor& w = value(weight);
  const Tensor& b = value(bias);
  if (in.rank() != 2) shape_error(OpKind::Dense, "input must be [B,F], got " + shape_string(in.shape()));
  if (w.rank() != 2 || w.dim(1) != in.dim(1))
    shape_error(OpKind::Dense, "weight " + shape_string(w.shape()) + " incompatible with input " +
                                   shape_string(in.shape()));
  if (b.size() != w.dim(0)) shape_error(OpKind::Dense, "bias length must equal output width");
  const auto rows = static_cast<Eigen::Index>(in.dim(0));
  const auto fan_in = static_cast<Eigen::Index>(in.dim(1));
  const auto fan_out = static_cast<Eigen::Index>(w.dim(0));
  Node n{OpKind::Dense, {x, weight, bias}};
  n.owned = Tensor({in.dim(0), w.dim(0)});
  // Row by row with a fixed k order, so a sample's output does not depend on
  // the other rows in the batch (GEMM blocking would make it depend on them).
  const auto fi = static_cast<std::size_t>(fan_in), fo = static_cast<std::size_t>(fan_out);
  std::vector<double> wt(fi * fo);
  constexpr std::size_t tile = 16;
  for (std::size_t o0 = 0; o0 < fo; o0 += tile)
    for (std::size_t k0 = 0; k0 < fi; k0 += tile)
      for (std::size_t o = o0; o < std::min(o0 + tile, fo); ++o)
        for (std::size_t k = k0; k < std::min(k0 + tile, fi); ++k) wt[k * fo + o] = w[o * fi + k];
  for (std::size_t r = 0; r < static_cast<std::size_t>(rows); ++r) {
    double* y = n.owned.data() + r * fo;
    const double* xr = in.data() + r * fi;
    for (std::size_t k = 0; k < fi; ++k) {
      const double a = xr[k];
      if (a == 0.0) continue;
      const double* wk = wt.data() + k * fo;
      for (std::size_t o = 0; o < fo; ++o) y[o] += a * wk[o];
    }
    for (std::size_t o = 0; o < fo; ++o) y[o] += b[o];
  }
  return push(std::move(n));
}

NodeId Graph::add(const std::vector<NodeId>& terms) {
  if (terms.empty()) shape_error(OpKind::Add, "needs at least one term");
  Node n{OpKind::Add, terms};
  n.owned = value(terms.front());
  for (std::size_t i = 1; i < terms.size(); ++i) {
    const Tensor& t = value(terms[i]);
    if (t.shape() != n.owned.shape())
      shape_error(OpKind::Add, "shape mismatch " + shape_string(t.shape()) + " vs " + shape_string(n.owned.shape()));
    for (std::size_t k = 0; k < t.size(); ++k) n.owned[k] += t[k];
  }
  return push(std::move(n));
}

NodeId Graph::scale(NodeId x, double factor) {
  Node n{OpKind::Scale, {x}};
  n.scalar = factor;
  n.owned = value(x);
  for (double& v : n.owned.values()) v *= factor;
  return push(std::move(n));
}

NodeId Graph::reduce_sum(NodeId x) {
  Node n{OpKind::ReduceSum, {x}};
  double s = 0.0;
  for (double v : value(x).values()) s += v;
  n.owned = Tensor::scalar(s);
  return push(std::move(n));
}

NodeId Graph::euclidean_loss(NodeId pred, Tensor target, Tensor mask) {
  const Tensor& p = value(pred);
  if (target.size() != p.size() || mask.size() != p.size())
    shape_error(OpKind::EuclideanLoss, "pred/target/mask lengths differ (" + std::to_string(p.size()) + ", " +
                                           std::to_string(target.size()) + ", " + std::to_string(mask.size()) + ")");
  double sum = 0.0, count = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double r = p[i] - target[i];
    sum += mask[i] * r * r;
    count += mask[i];
  }
  Node n{OpKind::EuclideanLoss, {pred}};
  n.scalar = std::max(1.0, count);
  n.owned = Tensor::scalar(sum / n.scalar);
  n.target = std::move(target);
  n.mask = std::move(mask);
  return push(std::move(n));
}

NodeId Graph::logistic_loss(NodeId logits, std::vector<int> labels, std::size_t classes) {
  const Tensor& z = value(logits);
  if (classes == 0 || z.size() % classes != 0 || z.size() / classes != labels.size())
    shape_error(OpKind::LogisticLoss, "expected " + std::to_string(labels.size()) + " rows of " +
                                          std::to_string(classes) + " logits, got " + shape_string(z.shape()));
  Node n{OpKind::LogisticLoss, {logits}};
  n.scratch.resize(z.size());
  double total = 0.0;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= classes)
      shape_error(OpKind::LogisticLoss, "label out of range at row " + std::to_string(r));
    const double* row = z.data() + r * classes;
    const double peak = *std::max_element(row, row + classes);
    double denom = 0.0;
    for (std::size_t c = 0; c < classes; ++c) denom += std::exp(row[c] - peak);
    for (std::size_t c = 0; c < classes; ++c) n.scratch[r * classes + c] = std::exp(row[c] - peak) / denom;
    total += -(row[labels[r]] - peak - std::log(denom));
  }
  n.owned = Tensor::scalar(total / static_cast<double>(labels.size()));
  n.labels = std::move(labels);
  n.window = classes;
  return push(std::move(n));
}

Tensor& Graph::grad_buffer(NodeId id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor(n.val().shape(), 0.0);
  return n.grad;
}

void Graph::backward(NodeId loss) {
  if (loss >= nodes_.size()) throw std::out_of_range("backward: unknown loss node");
  if (value(loss).size() != 1)
    throw std::invalid_argument("backward: loss must be scalar, got shape " + shape_string(value(loss).shape()));
  for (Node& n : nodes_) n.grad = Tensor();
  for (NodeId id = 0; id < nodes_.size(); ++id)
    if (nodes_[id].kind == OpKind::Parameter) grad_buffer(id);
  grad_buffer(loss)[0] = 1.0;
  for (NodeId id = loss + 1; id-- > 0;) {
    if (nodes_[id].grad.empty() || !nodes_[id].requires_grad) continue;
    backward_node(id);
  }
}

void Graph::backward_node(NodeId id) {
  Node& n = nodes_[id];
  const Tensor& gy = n.grad;
  auto wants = [&](std::size_t k) { return nodes_[n.inputs[k]].requires_grad; };

  switch (n.kind) {
    case OpKind::Input:
    case OpKind::Parameter:
      return;

    case OpKind::Conv2d: {
      const Tensor& in = value(n.inputs[0]);
      const Tensor& w = value(n.inputs[1]);
      const std::size_t batch = in.dim(0), channels = in.dim(1), height = in.dim(2), width = in.dim(3);
      const std::size_t out_ch = w.dim(0), kernel = w.dim(2);
      const std::size_t plane = height * width, patch = channels * kernel * kernel;
      const auto eo = static_cast<Eigen::Index>(out_ch), ep = static_cast<Eigen::Index>(patch),
                 epl = static_cast<Eigen::Index>(plane);
      double* gw = wants(1) ? grad_buffer(n.inputs[1]).data() : nullptr;
      double* gb = wants(2) ? grad_buffer(n.inputs[2]).data() : nullptr;
      double* gx = wants(0) ? grad_buffer(n.inputs[0]).data() : nullptr;
      std::vector<double> dcols(gx ? patch * plane : 0);
      std::vector<double> cols(gw ? patch * plane : 0);
      for (std::size_t s = 0; s < batch; ++s) {
        ConstMapMat gm(gy.data() + s * out_ch * plane, eo, epl);
        if (gw) {
          im2col(in.data() + s * channels * plane, channels, height, width, kernel, cols.data());
          MapMat(gw, eo, ep).noalias() += gm * ConstMapMat(cols.data(), ep, epl).transpose();
        }
        if (gb)
          for (std::size_t o = 0; o < out_ch; ++o) {
            const double* row = gy.data() + (s * out_ch + o) * plane;
            double acc = 0.0;
            for (std::size_t j = 0; j < plane; ++j) acc += row[j];
            gb[o] += acc;
          }
        if (gx) {
          MapMat(dcols.data(), ep, epl).noalias() = ConstMapMat(w.data(), eo, ep).transpose() * gm;
          col2im_add(dcols.data(), channels, height, width, kernel, gx + s * channels * plane);
        }
      }
      return;
    }

    case OpKind::Relu: {
      Tensor& gx = grad_buffer(n.inputs[0]);
      const Tensor& y = n.owned;
      for (std::size_t i = 0; i < y.size(); ++i)
        if (y[i] > 0.0) gx[i] += gy[i];
      return;
    }

    case OpKind::MaxPool: {
      Tensor& gx = grad_buffer(n.inputs[0]);
      for (std::size_t o = 0; o < n.index.size(); ++o) gx[n.index[o]] += gy[o];
      return;
    }

    case OpKind::Flatten:
    case OpKind::Add: {
      for (NodeId in : n.inputs) {
        if (!nodes_[in].requires_grad) continue;
        Tensor& gx = grad_buffer(in);
        for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
      }
      return;
    }

    case OpKind::Concat: {
      const std::size_t rows = gy.dim(0), total = gy.dim(1);
      const std::size_t fa = value(n.inputs[0]).dim(1), fb = total - fa;
      if (wants(0)) {
        Tensor& ga = grad_buffer(n.inputs[0]);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < fa; ++c) ga[r * fa + c] += gy[r * total + c];
      }
      if (wants(1)) {
        Tensor& gb = grad_buffer(n.inputs[1]);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < fb; ++c) gb[r * fb + c] += gy[r * total + fa + c];
      }
      return;
    }

    case OpKind::Dense: {
      const Tensor& in = value(n.inputs[0]);
      const Tensor& w = value(n.inputs[1]);
      const auto rows = static_cast<Eigen::Index>(in.dim(0));
      const auto fan_in = static_cast<Eigen::Index>(in.dim(1));
      const auto fan_out = static_cast<Eigen::Index>(w.dim(0));
      ConstMapMat gm(gy.data(), rows, fan_out);
      if (wants(0))
        MapMat(grad_buffer(n.inputs[0]).data(), rows, fan_in).noalias() += gm * ConstMapMat(w.data(), fan_out, fan_in);
      if (wants(1))
        MapMat(grad_buffer(n.inputs[1]).data(), fan_out, fan_in).noalias() +=
            gm.transpose() * ConstMapMat(in.data(), rows, fan_in);
      if (wants(2)) {
        double* gb = grad_buffer(n.inputs[2]).data();
        for (Eigen::Index r = 0; r < rows; ++r)
          for (Eigen::Index o = 0; o < fan_out; ++o) gb[o] += gm(r, o);
      }
      return;
    }

    case OpKind::Scale: {
      Tensor& gx = grad_buffer(n.inputs[0]);
      for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += n.scalar * gy[i];
      return;
    }

    case OpKind::ReduceSum: {
      Tensor& gx = grad_buffer(n.inputs[0]);
      for (double& v : gx.values()) v += gy[0];
      return;
    }

    case OpKind::EuclideanLoss: {
      Tensor& gx = grad_buffer(n.inputs[0]);
      const Tensor& p = value(n.inputs[0]);
      const double k = 2.0 * gy[0] / n.scalar;
      for (std::size_t i = 0; i < p.size(); ++i) gx[i] += k * n.mask[i] * (p[i] - n.target[i]);
      return;
    }

    case OpKind::LogisticLoss: {
      Tensor& gx = grad_buffer(n.inputs[0]);
      const std::size_t classes = n.window;
      const double k = gy[0] / static_cast<double>(n.labels.size());
      for (std::size_t r = 0; r < n.labels.size(); ++r)
        for (std::size_t c = 0; c < classes; ++c) {
          const double onehot = static_cast<int>(c) == n.labels[r] ? 1.0 : 0.0;
          gx[r * classes + c] += k * (n.scratch[r * classes + c] - onehot);
        }
      return;
    }
  }
}

GradientMap Graph::parameter_gradients() const {
  GradientMap out;
  for (const Node& n : nodes_) {
    if (n.kind != OpKind::Parameter) continue;
    Tensor g = n.grad.empty() ? Tensor(n.val().shape(), 0.0) : n.grad;
    auto [it, fresh] = out.try_emplace(n.name, std::move(g));
    if (!fresh) {
      // Same parameter registered twice: gradients add.
      for (std::size_t i = 0; i < it->second.size(); ++i) it->second[i] += n.grad.empty() ? 0.0 : n.grad[i];
    }
  }
  return out;
}

std::uint64_t Graph::kink_signature() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const Node& n : nodes_) {
    if (n.kind == OpKind::Relu) {
      const Tensor& in = value(n.inputs[0]);
      std::uint64_t word = 0;
      for (std::size_t i = 0; i < in.size(); ++i) {
        word = (word << 1) | (in[i] > 0.0 ? 1u : 0u);
        if (i % 64 == 63) h = fnv_mix(h, word), word = 0;
      }
      h = fnv_mix(h, word);
    } else if (n.kind == OpKind::MaxPool) {
      for (std::size_t idx : n.index) h = fnv_mix(h, idx);
    }
  }
  return h;
}

GradientMap backward(Graph& graph, NodeId loss) {
  graph.backward(loss);
  return graph.parameter_gradients();
}

}  // namespace dfa::ad
