#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string_view>
#include <vector>

#include "dfa/geometry.hpp"

namespace dfa::labels {

// Clustering space of each cascade stage.
enum class Space : int { Configuration = 0, Offset = 1, ContextualOffset = 2 };

std::string_view space_name(Space s);

struct ClusterModel {
  Space space = Space::Configuration;
  double temperature = 20.0;
  std::vector<std::vector<double>> centers;

  std::size_t k() const noexcept { return centers.size(); }
  std::size_t dim() const noexcept { return centers.empty() ? 0 : centers.front().size(); }
  void validate() const;

  friend bool operator==(const ClusterModel&, const ClusterModel&) = default;
};

struct KMeansResult {
  ClusterModel model;
  std::vector<std::size_t> assignments;
  double objective = 0.0;
  // Objective after the initial assignment and after every Lloyd iteration.
  std::vector<double> objective_trace;
  std::size_t iterations = 0;
};

inline constexpr std::size_t kMaxLloydIterations = 300;

// k-means++ seeding drawn from `seed`, then Lloyd iterations until the
// assignment is a fixpoint or kMaxLloydIterations is reached. Nearest center
// by squared l2 distance with lowest-index tie-break; an emptied cluster keeps
// its previous center.
KMeansResult kmeans(std::span<const std::vector<double>> points, std::size_t k, std::uint64_t seed,
                    Space space = Space::Configuration, double temperature = 20.0);

// Lloyd iterations from explicit initial centers.
KMeansResult lloyd(std::span<const std::vector<double>> points, std::vector<std::vector<double>> centers,
                   Space space = Space::Configuration, double temperature = 20.0);

double kmeans_objective(std::span<const std::vector<double>> points, const std::vector<std::vector<double>>& centers,
                        std::span<const std::size_t> assignments);

std::size_t nearest_center(std::span<const double> x, const ClusterModel& model);

// f(k) = exp(-||x - C_k||_2 / T)
std::vector<double> soft_pseudo_label(std::span<const double> x, const ClusterModel& model);

// Flattened coordinates; truncated landmarks clamped onto [-0.5, 0.5]^2.
std::vector<double> stage1_space(const geom::LandmarkSet& gt);
// prev - gt per coordinate; zero where the ground truth is truncated.
std::vector<double> offset_space(const geom::LandmarkSet& prev, const geom::LandmarkSet& gt);
// Column-stacked outer product delta * delta^T.
std::vector<double> contextual_offset(std::span<const double> delta);

struct RoutingTable {
  // Mean error of the training samples assigned to each cluster; +inf for
  // clusters with no samples.
  std::vector<double> errors;
  double epsilon = 0.3;

  friend bool operator==(const RoutingTable&, const RoutingTable&) = default;
};

inline constexpr double kEmptyClusterError = std::numeric_limits<double>::infinity();

RoutingTable cluster_error_table(std::span<const std::size_t> assignments, std::span<const double> sample_errors,
                                 std::size_t k, double epsilon);

// Versioned binary: "DFACLUS\0", u32 version, u32 space, u32 K, f64 T,
// u32 dim, then K*dim little-endian f64 centers.
void save_cluster_model(const std::filesystem::path& path, const ClusterModel& model);
ClusterModel load_cluster_model(const std::filesystem::path& path);

// Text: epsilon on the first line, then one "cluster_id,error" row per cluster.
void save_routing_table(const std::filesystem::path& path, const RoutingTable& table);
RoutingTable load_routing_table(const std::filesystem::path& path);

// cluster_id,population,mean_ne
void write_cluster_inspection_csv(const std::filesystem::path& path, std::size_t k,
                                  std::span<const std::size_t> assignments, std::span<const double> sample_errors);

}  // namespace dfa::labels
