#include "dfa/pseudolabel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

#include "dfa/binary_io.hpp"

namespace dfa::labels {

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

std::size_t nearest(std::span<const double> x, const std::vector<std::vector<double>>& centers, double* dist = nullptr) {
  std::size_t best = 0;
  double best_d = squared_distance(x, centers[0]);
  for (std::size_t k = 1; k < centers.size(); ++k) {
    const double d = squared_distance(x, centers[k]);
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  if (dist) *dist = best_d;
  return best;
}

void check_points(std::span<const std::vector<double>> points, std::size_t k) {
  if (k == 0) throw std::invalid_argument("kmeans: K must be at least 1");
  if (points.size() < k)
    throw std::invalid_argument("kmeans: " + std::to_string(points.size()) + " points cannot form " +
                                std::to_string(k) + " clusters");
  const std::size_t dim = points.front().size();
  for (const auto& p : points) {
    if (p.size() != dim) throw std::invalid_argument("kmeans: points of unequal dimension");
    for (double v : p)
      if (!std::isfinite(v)) throw std::invalid_argument("kmeans: non-finite coordinate");
  }
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

constexpr std::array<char, 8> kClusterMagic{'D', 'F', 'A', 'C', 'L', 'U', 'S', '\0'};
constexpr std::uint32_t kClusterVersion = 1;

}  // namespace

std::string_view space_name(Space s) {
  switch (s) {
    case Space::Configuration: return "configuration";
    case Space::Offset: return "offset";
    case Space::ContextualOffset: return "contextual-offset";
  }
  return "unknown";
}

void ClusterModel::validate() const {
  if (centers.empty()) throw std::invalid_argument("cluster model: K must be at least 1");
  if (!(temperature > 0.0) || !std::isfinite(temperature))
    throw std::invalid_argument("cluster model: temperature must be positive");
  const std::size_t d = centers.front().size();
  for (const auto& c : centers) {
    if (c.size() != d) throw std::invalid_argument("cluster model: centers of unequal dimension");
    for (double v : c)
      if (!std::isfinite(v)) throw std::invalid_argument("cluster model: non-finite center");
  }
}

double kmeans_objective(std::span<const std::vector<double>> points, const std::vector<std::vector<double>>& centers,
                        std::span<const std::size_t> assignments) {
  double total = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) total += squared_distance(points[i], centers[assignments[i]]);
  return total;
}

KMeansResult lloyd(std::span<const std::vector<double>> points, std::vector<std::vector<double>> centers, Space space,
                   double temperature) {
  check_points(points, centers.size());
  const std::size_t k = centers.size(), dim = points.front().size();
  KMeansResult r;
  r.assignments.resize(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) r.assignments[i] = nearest(points[i], centers);
  r.objective_trace.push_back(kmeans_objective(points, centers, r.assignments));

  for (std::size_t it = 0; it < kMaxLloydIterations; ++it) {
    std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
      auto& s = sums[r.assignments[i]];
      for (std::size_t d = 0; d < dim; ++d) s[d] += points[i][d];
      ++counts[r.assignments[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      for (std::size_t d = 0; d < dim; ++d) centers[c][d] = sums[c][d] / static_cast<double>(counts[c]);
    }
    bool changed = false;
    for (std::size_t i = 0; i < points.size(); ++i) {
      const std::size_t a = nearest(points[i], centers);
      if (a != r.assignments[i]) {
        r.assignments[i] = a;
        changed = true;
      }
    }
    r.iterations = it + 1;
    r.objective_trace.push_back(kmeans_objective(points, centers, r.assignments));
    if (!changed) break;
  }
  r.objective = r.objective_trace.back();
  r.model = ClusterModel{space, temperature, std::move(centers)};
  return r;
}

KMeansResult kmeans(std::span<const std::vector<double>> points, std::size_t k, std::uint64_t seed, Space space,
                    double temperature) {
  check_points(points, k);
  std::mt19937_64 gen(seed);
  std::vector<std::vector<double>> centers;
  centers.reserve(k);
  centers.push_back(points[gen() % points.size()]);
  std::vector<double> d2(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) d2[i] = squared_distance(points[i], centers[0]);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  while (centers.size() < k) {
    double total = 0.0;
    for (double v : d2) total += v;
    std::size_t pick = 0;
    if (total > 0.0) {
      const double target = unit(gen) * total;
      double acc = 0.0;
      pick = points.size() - 1;
      for (std::size_t i = 0; i < points.size(); ++i) {
        acc += d2[i];
        if (acc > target && d2[i] > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = gen() % points.size();
    }
    centers.push_back(points[pick]);
    for (std::size_t i = 0; i < points.size(); ++i) d2[i] = std::min(d2[i], squared_distance(points[i], centers.back()));
  }
  return lloyd(points, std::move(centers), space, temperature);
}

std::size_t nearest_center(std::span<const double> x, const ClusterModel& model) {
  if (x.size() != model.dim()) throw std::invalid_argument("nearest_center: dimension mismatch");
  return nearest(x, model.centers);
}

std::vector<double> soft_pseudo_label(std::span<const double> x, const ClusterModel& model) {
  if (x.size() != model.dim())
    throw std::invalid_argument("soft_pseudo_label: vector has dimension " + std::to_string(x.size()) +
                                ", centers have " + std::to_string(model.dim()));
  std::vector<double> f(model.k());
  for (std::size_t k = 0; k < model.k(); ++k)
    f[k] = std::exp(-std::sqrt(squared_distance(x, model.centers[k])) / model.temperature);
  return f;
}

std::vector<double> stage1_space(const geom::LandmarkSet& gt) {
  std::vector<double> v = gt.flatten();
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt.visibility[i] != geom::Visibility::Truncated) continue;
    v[2 * i] = std::clamp(v[2 * i], -0.5, 0.5);
    v[2 * i + 1] = std::clamp(v[2 * i + 1], -0.5, 0.5);
  }
  return v;
}

std::vector<double> offset_space(const geom::LandmarkSet& prev, const geom::LandmarkSet& gt) {
  if (prev.size() != gt.size()) throw std::invalid_argument("offset_space: landmark count mismatch");
  std::vector<double> v(2 * gt.size(), 0.0);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt.visibility[i] == geom::Visibility::Truncated) continue;
    v[2 * i] = prev.coords[i].x - gt.coords[i].x;
    v[2 * i + 1] = prev.coords[i].y - gt.coords[i].y;
  }
  return v;
}

std::vector<double> contextual_offset(std::span<const double> delta) {
  const std::size_t n = delta.size();
  std::vector<double> out(n * n);
  // Column j of the outer product is delta * delta[j].
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < n; ++i) out[j * n + i] = delta[i] * delta[j];
  return out;
}

RoutingTable cluster_error_table(std::span<const std::size_t> assignments, std::span<const double> sample_errors,
                                 std::size_t k, double epsilon) {
  if (assignments.size() != sample_errors.size())
    throw std::invalid_argument("cluster_error_table: assignment/error count mismatch");
  std::vector<double> sums(k, 0.0);
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    if (assignments[i] >= k) throw std::invalid_argument("cluster_error_table: assignment index out of range");
    sums[assignments[i]] += sample_errors[i];
    ++counts[assignments[i]];
  }
  RoutingTable t;
  t.epsilon = epsilon;
  t.errors.resize(k);
  for (std::size_t c = 0; c < k; ++c)
    t.errors[c] = counts[c] == 0 ? kEmptyClusterError : sums[c] / static_cast<double>(counts[c]);
  return t;
}

void save_cluster_model(const std::filesystem::path& path, const ClusterModel& model) {
  model.validate();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write cluster model " + path.string());
  os.write(kClusterMagic.data(), kClusterMagic.size());
  io::put_u32(os, kClusterVersion);
  io::put_u32(os, static_cast<std::uint32_t>(model.space));
  io::put_u32(os, static_cast<std::uint32_t>(model.k()));
  io::put_f64(os, model.temperature);
  io::put_u32(os, static_cast<std::uint32_t>(model.dim()));
  for (const auto& c : model.centers)
    for (double v : c) io::put_f64(os, v);
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

ClusterModel load_cluster_model(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open cluster model " + path.string());
  std::array<char, 8> magic{};
  io::read_exact(is, magic.data(), magic.size());
  if (magic != kClusterMagic) throw std::runtime_error(path.string() + ": bad cluster model magic");
  const std::uint32_t version = io::get_u32(is);
  if (version != kClusterVersion) throw std::runtime_error(path.string() + ": unsupported cluster model version");
  ClusterModel m;
  const std::uint32_t space = io::get_u32(is);
  if (space > 2) throw std::runtime_error(path.string() + ": bad space tag");
  m.space = static_cast<Space>(space);
  const std::uint32_t k = io::get_u32(is);
  m.temperature = io::get_f64(is);
  const std::uint32_t dim = io::get_u32(is);
  if (k == 0 || dim == 0 || static_cast<std::uint64_t>(k) * dim > (1u << 26))
    throw std::runtime_error(path.string() + ": implausible cluster model size");
  m.centers.assign(k, std::vector<double>(dim));
  for (auto& c : m.centers)
    for (double& v : c) v = io::get_f64(is);
  m.validate();
  return m;
}

void save_routing_table(const std::filesystem::path& path, const RoutingTable& table) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write routing table " + path.string());
  os << "epsilon," << format_double(table.epsilon) << "\n";
  os << "cluster_id,error\n";
  for (std::size_t k = 0; k < table.errors.size(); ++k) os << k << "," << format_double(table.errors[k]) << "\n";
}

RoutingTable load_routing_table(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open routing table " + path.string());
  RoutingTable t;
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& what) {
    throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + what);
  };
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) fail("expected two fields");
    const std::string key = line.substr(0, comma), val = line.substr(comma + 1);
    if (key == "cluster_id") continue;
    char* end = nullptr;
    const double v = std::strtod(val.c_str(), &end);
    if (end == val.c_str() || *end != '\0') fail("bad number '" + val + "'");
    if (key == "epsilon") {
      t.epsilon = v;
    } else {
      if (key != std::to_string(t.errors.size())) fail("cluster ids must be consecutive");
      t.errors.push_back(v);
    }
  }
  if (t.errors.empty()) throw std::runtime_error(path.string() + ": routing table has no clusters");
  return t;
}

void write_cluster_inspection_csv(const std::filesystem::path& path, std::size_t k,
                                  std::span<const std::size_t> assignments, std::span<const double> sample_errors) {
  const RoutingTable t = cluster_error_table(assignments, sample_errors, k, 0.0);
  std::vector<std::size_t> population(k, 0);
  for (std::size_t a : assignments) ++population[a];
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "cluster_id,population,mean_ne\n";
  for (std::size_t c = 0; c < k; ++c) os << c << "," << population[c] << "," << format_double(t.errors[c]) << "\n";
}

}  // namespace dfa::labels
