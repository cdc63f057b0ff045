#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dfa/cascade.hpp"
#include "dfa/report.hpp"

namespace dfa::baselines {

using cascade::LogRow;
using cascade::TrainConfig;

struct DirectConfig {
  ad::ArchDescriptor arch;
  TrainConfig train;
  std::size_t clusters = 20;
  double temperature = 20.0;
  double label_scale = 64.0;
  std::uint64_t seed = 0;
};

struct DirectResult {
  ad::StageNetwork net;
  std::optional<labels::ClusterModel> clusters;
  std::vector<LogRow> log;
};

// A single whole-image regressor. Flags switch the visibility and stage-1
// pseudo-label terms; with both on this is the cascade's first stage.
DirectResult train_direct(std::span<const synth::SyntheticSample> train, std::span<const synth::SyntheticSample> val,
                          const DirectConfig& config, bool with_pseudolabels, bool with_visibility);

std::vector<geom::LandmarkSet> predict_direct(const ad::StageNetwork& net,
                                              std::span<const synth::SyntheticSample> samples);

// 120/224 of the image side, rounded: 34 px for 64-px images.
std::size_t default_patch_size(std::size_t image_side);

struct Crop {
  Tensor patch;  // [1, P, P]
  bool empty = false;  // no overlap with the image; patch is all zeros
};

// P x P window centred on the pixel nearest to (cx, cy); pixels outside the
// image read as zero.
Crop crop_patch(const Tensor& image, double cx, double cy, std::size_t patch);

struct PatchConfig {
  DirectConfig stage1;
  TrainConfig patch_train;
  std::size_t patch_size = 34;
};

struct PatchCascadeModel {
  ad::StageNetwork stage1;
  std::vector<ad::StageNetwork> stage2;  // one per landmark
  std::vector<ad::StageNetwork> stage3;
  std::size_t patch_size = 34;

  std::size_t trained_network_count() const { return 1 + stage2.size() + stage3.size(); }
  static std::size_t expected_network_count(std::size_t landmarks) { return 1 + 2 * landmarks; }
};

struct PatchPrediction {
  std::array<geom::LandmarkSet, 3> stages;
  // Crops that fell entirely outside the image, over stages 2 and 3.
  std::size_t empty_crops = 0;
};

PatchCascadeModel train_patch_cascade(std::span<const synth::SyntheticSample> train,
                                      std::span<const synth::SyntheticSample> val, const PatchConfig& config);
std::vector<PatchPrediction> predict_patch_cascade(const PatchCascadeModel& model,
                                                   std::span<const synth::SyntheticSample> samples);

// One compared model's predictions on the shared test set.
struct ModelEntry {
  std::string name;
  std::size_t trained_networks = 0;
  std::vector<geom::LandmarkSet> predictions;
};

struct ComparisonRow {
  std::string model;
  std::string group;  // "landmark" or "subset"
  std::string key;    // landmark name or subset name
  std::optional<double> ne;
  std::optional<double> pdl;
  std::size_t count = 0;
};

struct Comparison {
  std::vector<ComparisonRow> rows;
  std::vector<double> thresholds;
  std::vector<report::Series> curves;  // PDL vs threshold per model
  double threshold_px = 0.0;
};

// |landmarks| x |models| per-landmark rows followed by |subsets| x |models|
// per-subset rows.
Comparison compare(std::span<const ModelEntry> models, std::span<const synth::SyntheticSample> test,
                   double threshold_px, double max_threshold_px, std::size_t curve_steps);

// compare.csv, pdl_curves.csv, pdl_curves.svg and models.csv under `dir`.
void write_comparison(const std::filesystem::path& dir, const Comparison& cmp, std::span<const ModelEntry> models,
                      std::span<const synth::SyntheticSample> test);

}  // namespace dfa::baselines
