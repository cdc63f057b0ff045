#include "dfa/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace dfa::geom {

std::size_t LandmarkSet::truncated_count() const {
  return static_cast<std::size_t>(std::count(visibility.begin(), visibility.end(), Visibility::Truncated));
}

std::vector<double> LandmarkSet::flatten() const {
  std::vector<double> out;
  out.reserve(2 * coords.size());
  for (const Point& p : coords) {
    out.push_back(p.x);
    out.push_back(p.y);
  }
  return out;
}

LandmarkSet LandmarkSet::from_flat(std::span<const double> xy, std::vector<Visibility> visibility) {
  if (xy.size() != 2 * visibility.size()) throw std::invalid_argument("landmarks: coordinate/visibility count mismatch");
  LandmarkSet s;
  s.visibility = std::move(visibility);
  s.coords.resize(s.visibility.size());
  for (std::size_t i = 0; i < s.coords.size(); ++i) s.coords[i] = {xy[2 * i], xy[2 * i + 1]};
  return s;
}

void BBox::validate() const {
  if (!(w > 0.0) || !(h > 0.0) || !std::isfinite(w) || !std::isfinite(h))
    throw std::invalid_argument("bbox: width and height must be positive, got " + std::to_string(w) + " x " +
                                std::to_string(h));
}

std::vector<Point> normalize_landmarks(std::span<const Point> pixels, const BBox& box) {
  box.validate();
  std::vector<Point> out(pixels.size());
  for (std::size_t i = 0; i < pixels.size(); ++i)
    out[i] = {(pixels[i].x - box.xc) / box.w, (pixels[i].y - box.yc) / box.h};
  return out;
}

std::vector<Point> denormalize_landmarks(std::span<const Point> normalized, const BBox& box) {
  box.validate();
  std::vector<Point> out(normalized.size());
  for (std::size_t i = 0; i < normalized.size(); ++i)
    out[i] = {normalized[i].x * box.w + box.xc, normalized[i].y * box.h + box.yc};
  return out;
}

NormalizedError normalized_error(const LandmarkSet& pred, const LandmarkSet& gt) {
  if (pred.size() != gt.size() || gt.visibility.size() != gt.size())
    throw std::invalid_argument("normalized_error: landmark count mismatch");
  NormalizedError ne;
  ne.per_landmark.resize(gt.size());
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt.visibility[i] == Visibility::Truncated) continue;
    const double d = std::hypot(pred.coords[i].x - gt.coords[i].x, pred.coords[i].y - gt.coords[i].y);
    ne.per_landmark[i] = d;
    sum += d;
    ++n;
  }
  if (n > 0) ne.mean = sum / static_cast<double>(n);
  return ne;
}

NormalizedError dataset_normalized_error(std::span<const LandmarkSet> preds, std::span<const LandmarkSet> gts) {
  if (preds.size() != gts.size()) throw std::invalid_argument("normalized_error: prediction/ground-truth count mismatch");
  if (gts.empty()) return {};
  const std::size_t n = gts.front().size();
  std::vector<double> sums(n, 0.0);
  std::vector<std::size_t> counts(n, 0);
  for (std::size_t s = 0; s < gts.size(); ++s) {
    if (gts[s].size() != n) throw std::invalid_argument("normalized_error: landmark count varies across samples");
    const NormalizedError e = normalized_error(preds[s], gts[s]);
    for (std::size_t i = 0; i < n; ++i)
      if (e.per_landmark[i]) {
        sums[i] += *e.per_landmark[i];
        ++counts[i];
      }
  }
  NormalizedError out;
  out.per_landmark.resize(n);
  double total = 0.0;
  std::size_t present = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (counts[i] == 0) continue;
    out.per_landmark[i] = sums[i] / static_cast<double>(counts[i]);
    total += *out.per_landmark[i];
    ++present;
  }
  if (present > 0) out.mean = total / static_cast<double>(present);
  return out;
}

double pdl(std::span<const LandmarkSet> preds, std::span<const LandmarkSet> gts, double threshold_px,
           double image_side) {
  if (!(threshold_px > 0.0)) throw std::invalid_argument("pdl: threshold must be positive");
  if (!(image_side > 0.0)) throw std::invalid_argument("pdl: image side must be positive");
  if (preds.size() != gts.size()) throw std::invalid_argument("pdl: prediction/ground-truth count mismatch");
  std::size_t hit = 0, total = 0;
  for (std::size_t s = 0; s < gts.size(); ++s) {
    const auto& gt = gts[s];
    const auto& pr = preds[s];
    if (pr.size() != gt.size()) throw std::invalid_argument("pdl: landmark count mismatch");
    for (std::size_t i = 0; i < gt.size(); ++i) {
      if (gt.visibility[i] == Visibility::Truncated) continue;
      const double d =
          std::hypot(pr.coords[i].x - gt.coords[i].x, pr.coords[i].y - gt.coords[i].y) * image_side;
      ++total;
      if (d <= threshold_px) ++hit;
    }
  }
  if (total == 0) throw std::invalid_argument("pdl: no non-truncated landmarks");
  return static_cast<double>(hit) / static_cast<double>(total);
}

Subset classify_subset(PoseClass pose, const LandmarkSet& gt) {
  const std::size_t cut = gt.truncated_count();
  if (cut > 3) return Subset::LargeZoom;
  if (cut > 1) return Subset::MediumZoom;
  switch (pose) {
    case PoseClass::Front: return Subset::NormalPose;
    case PoseClass::Side: return Subset::MediumPose;
    case PoseClass::Back: return Subset::LargePose;
  }
  throw std::invalid_argument("classify_subset: unknown pose class");
}

std::string_view subset_name(Subset s) {
  switch (s) {
    case Subset::NormalPose: return "normal-pose";
    case Subset::MediumPose: return "medium-pose";
    case Subset::LargePose: return "large-pose";
    case Subset::MediumZoom: return "medium-zoom";
    case Subset::LargeZoom: return "large-zoom";
  }
  return "unknown";
}

std::string_view pose_name(PoseClass p) {
  switch (p) {
    case PoseClass::Front: return "front";
    case PoseClass::Side: return "side";
    case PoseClass::Back: return "back";
  }
  return "unknown";
}

PoseClass parse_pose(std::string_view name) {
  if (name == "front") return PoseClass::Front;
  if (name == "side") return PoseClass::Side;
  if (name == "back") return PoseClass::Back;
  throw std::invalid_argument("unknown pose class '" + std::string(name) + "'");
}

}  // namespace dfa::geom
