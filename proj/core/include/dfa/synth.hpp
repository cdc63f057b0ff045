#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "dfa/geometry.hpp"
#include "dfa/tensor.hpp"

namespace dfa::synth {

inline constexpr std::size_t kLandmarkCount = 8;

inline constexpr std::array<std::string_view, kLandmarkCount> kLandmarkNames{
    "left_collar", "right_collar", "left_sleeve", "right_sleeve",
    "left_waist",  "right_waist",  "left_hem",    "right_hem"};

enum class Garment : int { UpperBody = 0, LowerBody = 1, FullBody = 2 };

std::string_view garment_name(Garment g);
Garment parse_garment(std::string_view name);

struct GarmentTemplate {
  Garment kind;
  // Canonical anchors in the unit square, one per landmark.
  std::array<geom::Point, kLandmarkCount> anchors;
};

const GarmentTemplate& garment_template(Garment g);

struct SampleMeta {
  geom::PoseClass pose = geom::PoseClass::Front;
  double zoom = 1.0;
  Garment garment = Garment::UpperBody;
  std::uint64_t seed = 0;

  friend bool operator==(const SampleMeta&, const SampleMeta&) = default;
};

struct SyntheticSample {
  std::size_t id = 0;
  Tensor image;              // [1, S, S], intensities k/255
  geom::LandmarkSet pixels;  // pixel coordinates
  geom::LandmarkSet gt;      // normalized by `box`
  geom::BBox box;
  SampleMeta meta;

  geom::Subset subset() const { return geom::classify_subset(meta.pose, gt); }
  friend bool operator==(const SyntheticSample&, const SyntheticSample&) = default;
};

struct Range {
  double lo;
  double hi;
};

struct GeneratorConfig {
  std::size_t count = 2800;
  std::size_t image_size = 64;
  std::size_t landmarks = kLandmarkCount;
  // normal-pose, medium-pose, large-pose, medium-zoom, large-zoom
  std::array<double, 5> subset_mix{0.35, 0.20, 0.15, 0.15, 0.15};
  // upper-body, lower-body, full-body
  std::array<double, 3> garment_mix{0.5, 0.25, 0.25};
  double invisible_fraction = 0.05;
  // Amplitude of the low-frequency warp, in garment units.
  double deformation = 0.04;
  // Per-point jitter, in garment units.
  double jitter = 0.01;
  double max_rotation_deg = 6.0;
  double background_noise = 0.08;
  // Garment extent as a fraction of the image side.
  Range garment_scale{0.62, 0.72};
  Range normal_zoom{0.9, 1.05};
  Range medium_zoom{1.3, 1.8};
  Range large_zoom{1.7, 2.5};
  double zoom_shift = 0.22;
  std::size_t medium_zoom_min_truncated = 2;
  std::size_t medium_zoom_max_truncated = 3;
  std::size_t large_zoom_min_truncated = 4;
  std::size_t large_zoom_max_truncated = 6;

  void validate() const;
};

// Deterministic in (config, seed); sample i draws only from derive_seed(seed, "sample", i).
std::vector<SyntheticSample> generate_dataset(const GeneratorConfig& config, std::uint64_t seed);
SyntheticSample generate_sample(const GeneratorConfig& config, std::uint64_t seed, std::size_t index);

struct RenderStyle {
  Garment garment = Garment::UpperBody;
  bool back_view = false;  // straight neckline instead of the V
  double glyph_scale = 1.0;
  double stroke_intensity = 0.4;
  double glyph_intensity = 0.75;
  double background_noise = 0.0;
  std::uint64_t noise_seed = 0;
};

// Renders visible landmarks as landmark-specific glyphs (peak intensity 1 at
// the landmark), garment outline strokes, and occluder patches over invisible
// landmarks. Coordinates are pixels. Output is [1, size, size] in [0, 1],
// quantized to multiples of 1/255.
Tensor render_image(const geom::LandmarkSet& pixels, const RenderStyle& style, std::size_t size);

// images/<id>.pgm (binary P5) plus annotations.csv with header
//   sample_id,image,bbox_xc,bbox_yc,bbox_w,bbox_h,x0,y0,v0,...,pose,zoom,garment,seed
void save_dataset(const std::filesystem::path& dir, const std::vector<SyntheticSample>& samples);
std::vector<SyntheticSample> load_dataset(const std::filesystem::path& dir);

void write_pgm(const std::filesystem::path& path, const Tensor& image);
Tensor read_pgm(const std::filesystem::path& path);

struct Splits {
  std::vector<SyntheticSample> train;
  std::vector<SyntheticSample> val;
  std::vector<SyntheticSample> test;
};

// Seeded shuffle, then sizes round(f0 * n), round(f1 * n), remainder. Each
// split keeps ascending sample id order.
Splits split(const std::vector<SyntheticSample>& dataset, std::array<double, 3> fractions, std::uint64_t seed);

}  // namespace dfa::synth
