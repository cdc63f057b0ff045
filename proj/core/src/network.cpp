#include "dfa/network.hpp"

#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include "dfa/rng.hpp"

namespace dfa::ad {

std::size_t ArchDescriptor::trunk_features() const {
  std::size_t h = image_height, w = image_width;
  for (std::size_t i = 0; i < conv_channels.size(); ++i) {
    h /= pool;
    w /= pool;
  }
  const std::size_t c = conv_channels.empty() ? channels : conv_channels.back();
  return c * h * w;
}

void ArchDescriptor::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("architecture: " + what); };
  if (image_height == 0 || image_width == 0 || channels == 0) fail("image extents must be positive");
  if (kernel == 0 || kernel % 2 == 0) fail("kernel must be odd");
  if (pool == 0) fail("pool window must be positive");
  if (dense_width == 0) fail("dense width must be positive");
  if (landmarks == 0) fail("landmark count must be positive");
  if (clusters == 0) fail("cluster count must be positive");
  std::size_t h = image_height, w = image_width;
  for (std::size_t c : conv_channels) {
    if (c == 0) fail("conv channels must be positive");
    if (h < pool || w < pool) fail("image too small for " + std::to_string(conv_channels.size()) + " pooling layers");
    h /= pool;
    w /= pool;
  }
}

std::string ArchDescriptor::to_string() const {
  std::ostringstream os;
  os << "input=" << channels << "x" << image_height << "x" << image_width << ";conv=";
  for (std::size_t i = 0; i < conv_channels.size(); ++i) os << (i ? "," : "") << conv_channels[i];
  os << ";kernel=" << kernel << ";pool=" << pool << ";dense=" << dense_width << ";aux=" << aux_length
     << ";landmarks=" << landmarks << ";clusters=" << clusters;
  return os.str();
}

ArchDescriptor ArchDescriptor::parse(const std::string& text) {
  ArchDescriptor a;
  a.conv_channels.clear();
  std::istringstream is(text);
  std::string field;
  auto to_size = [&](const std::string& s) {
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("architecture: bad number '" + s + "'");
    return static_cast<std::size_t>(v);
  };
  while (std::getline(is, field, ';')) {
    const auto eq = field.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("architecture: malformed field '" + field + "'");
    const std::string key = field.substr(0, eq), val = field.substr(eq + 1);
    if (key == "input") {
      const auto x1 = val.find('x'), x2 = val.find('x', x1 + 1);
      if (x1 == std::string::npos || x2 == std::string::npos)
        throw std::invalid_argument("architecture: malformed input '" + val + "'");
      a.channels = to_size(val.substr(0, x1));
      a.image_height = to_size(val.substr(x1 + 1, x2 - x1 - 1));
      a.image_width = to_size(val.substr(x2 + 1));
    } else if (key == "conv") {
      std::istringstream cs(val);
      std::string c;
      while (std::getline(cs, c, ','))
        if (!c.empty()) a.conv_channels.push_back(to_size(c));
    } else if (key == "kernel") {
      a.kernel = to_size(val);
    } else if (key == "pool") {
      a.pool = to_size(val);
    } else if (key == "dense") {
      a.dense_width = to_size(val);
    } else if (key == "aux") {
      a.aux_length = to_size(val);
    } else if (key == "landmarks") {
      a.landmarks = to_size(val);
    } else if (key == "clusters") {
      a.clusters = to_size(val);
    } else {
      throw std::invalid_argument("architecture: unknown field '" + key + "'");
    }
  }
  a.validate();
  return a;
}

std::map<std::string, Shape> parameter_shapes(const ArchDescriptor& arch) {
  arch.validate();
  std::map<std::string, Shape> shapes;
  std::size_t in_ch = arch.channels;
  for (std::size_t i = 0; i < arch.conv_channels.size(); ++i) {
    const std::string p = "conv" + std::to_string(i);
    shapes[p + ".weight"] = {arch.conv_channels[i], in_ch, arch.kernel, arch.kernel};
    shapes[p + ".bias"] = {arch.conv_channels[i]};
    in_ch = arch.conv_channels[i];
  }
  const std::size_t hidden_in = arch.trunk_features() + arch.aux_length;
  shapes["dense.weight"] = {arch.dense_width, hidden_in};
  shapes["dense.bias"] = {arch.dense_width};
  shapes["pos.weight"] = {2 * arch.landmarks, arch.dense_width};
  shapes["pos.bias"] = {2 * arch.landmarks};
  shapes["vis.weight"] = {3 * arch.landmarks, arch.dense_width};
  shapes["vis.bias"] = {3 * arch.landmarks};
  shapes["label.weight"] = {arch.clusters, arch.dense_width};
  shapes["label.bias"] = {arch.clusters};
  return shapes;
}

StageNetwork::StageNetwork(ArchDescriptor arch, ParameterSet params) : arch_(std::move(arch)), params_(std::move(params)) {
  const auto shapes = parameter_shapes(arch_);
  if (shapes.size() != params_.size()) throw std::invalid_argument("network: parameter set does not match architecture");
  for (const auto& [name, shape] : shapes) {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::invalid_argument("network: missing parameter " + name);
    if (it->second.shape() != shape)
      throw std::invalid_argument("network: parameter " + name + " has shape " + shape_string(it->second.shape()) +
                                  ", expected " + shape_string(shape));
  }
}

StageNetwork StageNetwork::zeros(const ArchDescriptor& arch) {
  ParameterSet params;
  for (const auto& [name, shape] : parameter_shapes(arch)) params.emplace(name, Tensor(shape, 0.0));
  return StageNetwork(arch, std::move(params));
}

StageNetwork StageNetwork::initialize(const ArchDescriptor& arch, std::uint64_t seed) {
  StageNetwork net = zeros(arch);
  std::mt19937_64 gen(seed);
  for (auto& [name, t] : net.params_) {
    if (name.ends_with(".bias")) continue;
    std::size_t fan_in = 1, fan_out = t.dim(0);
    for (std::size_t a = 1; a < t.rank(); ++a) fan_in *= t.dim(a);
    for (std::size_t a = 2; a < t.rank(); ++a) fan_out *= t.dim(a);
    const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-s, s);
    for (double& v : t.values()) v = dist(gen);
  }
  return net;
}

std::size_t StageNetwork::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : params_) n += t.size();
  return n;
}

HeadNodes StageNetwork::forward(Graph& graph, const Tensor& images, const Tensor& aux) const {
  if (images.rank() != 4 || images.dim(1) != arch_.channels || images.dim(2) != arch_.image_height ||
      images.dim(3) != arch_.image_width)
    throw std::invalid_argument("input layer: expected [B," + std::to_string(arch_.channels) + "," +
                                std::to_string(arch_.image_height) + "," + std::to_string(arch_.image_width) +
                                "], got " + shape_string(images.shape()));
  const std::size_t batch = images.dim(0);
  if (arch_.aux_length > 0 && (aux.rank() != 2 || aux.dim(0) != batch || aux.dim(1) != arch_.aux_length))
    throw std::invalid_argument("aux input: expected [" + std::to_string(batch) + "," +
                                std::to_string(arch_.aux_length) + "], got " + shape_string(aux.shape()));
  if (arch_.aux_length == 0 && !aux.empty())
    throw std::invalid_argument("aux input: architecture takes no auxiliary input, got " + shape_string(aux.shape()));

  auto param = [&](const std::string& name) { return graph.parameter(name, params_.at(name)); };

  NodeId x = graph.input(images);
  for (std::size_t i = 0; i < arch_.conv_channels.size(); ++i) {
    const std::string p = "conv" + std::to_string(i);
    x = graph.conv2d(x, param(p + ".weight"), param(p + ".bias"));
    x = graph.relu(x);
    x = graph.max_pool(x, arch_.pool);
  }
  x = graph.flatten(x);
  if (arch_.aux_length > 0) x = graph.concat(x, graph.input(aux));
  x = graph.relu(graph.dense(x, param("dense.weight"), param("dense.bias")));
  return HeadNodes{
      graph.dense(x, param("pos.weight"), param("pos.bias")),
      graph.dense(x, param("vis.weight"), param("vis.bias")),
      graph.dense(x, param("label.weight"), param("label.bias")),
  };
}

HeadValues StageNetwork::evaluate(const Tensor& images, const Tensor& aux) const {
  Graph graph;
  const HeadNodes h = forward(graph, images, aux);
  return HeadValues{graph.value(h.positions), graph.value(h.visibility_logits), graph.value(h.pseudolabels)};
}

}  // namespace dfa::ad
