#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dfa::geom {

enum class Visibility : int { Visible = 0, Invisible = 1, Truncated = 2 };

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

// Landmark coordinates (normalized unless stated otherwise) and their
// visibility states.
struct LandmarkSet {
  std::vector<Point> coords;
  std::vector<Visibility> visibility;

  std::size_t size() const noexcept { return coords.size(); }
  std::size_t truncated_count() const;
  // (x0, y0, x1, y1, ...)
  std::vector<double> flatten() const;
  static LandmarkSet from_flat(std::span<const double> xy, std::vector<Visibility> visibility);

  friend bool operator==(const LandmarkSet&, const LandmarkSet&) = default;
};

// Box center and extents in pixels.
struct BBox {
  double xc = 0.0;
  double yc = 0.0;
  double w = 1.0;
  double h = 1.0;

  void validate() const;
  friend bool operator==(const BBox&, const BBox&) = default;
};

// ((x - xc) / w, (y - yc) / h)
std::vector<Point> normalize_landmarks(std::span<const Point> pixels, const BBox& box);
std::vector<Point> denormalize_landmarks(std::span<const Point> normalized, const BBox& box);

struct NormalizedError {
  // Empty entries mark landmarks truncated in the ground truth.
  std::vector<std::optional<double>> per_landmark;
  std::optional<double> mean;
};

NormalizedError normalized_error(const LandmarkSet& pred, const LandmarkSet& gt);

// Dataset-level error: per-landmark mean over the samples where that landmark
// is not truncated, and the mean of those per-landmark values.
NormalizedError dataset_normalized_error(std::span<const LandmarkSet> preds, std::span<const LandmarkSet> gts);

// Fraction of non-truncated landmarks whose pixel distance (normalized
// distance scaled by image_side) is <= threshold_px.
double pdl(std::span<const LandmarkSet> preds, std::span<const LandmarkSet> gts, double threshold_px,
           double image_side);

enum class PoseClass : int { Front = 0, Side = 1, Back = 2 };

enum class Subset : int { NormalPose = 0, MediumPose, LargePose, MediumZoom, LargeZoom };

inline constexpr std::array<Subset, 5> kAllSubsets{Subset::NormalPose, Subset::MediumPose, Subset::LargePose,
                                                   Subset::MediumZoom, Subset::LargeZoom};

// More than three truncated landmarks is large zoom-in, more than one is
// medium zoom-in; otherwise the pose class decides.
Subset classify_subset(PoseClass pose, const LandmarkSet& gt);

std::string_view subset_name(Subset s);
std::string_view pose_name(PoseClass p);
PoseClass parse_pose(std::string_view name);

}  // namespace dfa::geom
