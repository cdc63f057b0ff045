#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>

#include "dfa/baselines.hpp"
#include "dfa/cascade.hpp"
#include "dfa/synth.hpp"

namespace dfa::harness {

// Everything one run needs, loaded from a `key = value` file. Keys are listed
// in `RunConfig::keys()`; unknown keys are errors.
struct RunConfig {
  // data
  std::size_t train_count = 2000;
  std::size_t val_count = 400;
  std::size_t test_count = 400;
  std::size_t image_size = 64;
  std::array<double, 5> subset_mix{0.35, 0.20, 0.15, 0.15, 0.15};
  double invisible_fraction = 0.05;
  double deformation = 0.04;
  double jitter = 0.01;
  double background_noise = 0.08;

  // network
  std::vector<std::size_t> conv_channels{8, 16};
  std::size_t kernel = 3;
  std::size_t pool = 2;
  std::size_t dense_width = 128;

  // training, shared by all stages unless a per-stage iteration count is set
  std::array<std::size_t, 3> iterations{6000, 6000, 6000};
  std::size_t batch_size = 32;
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::size_t log_every = 50;
  std::size_t eval_every = 500;

  // pseudo-labels, routing, loss schedule
  std::size_t clusters = 20;
  double temperature = 20.0;
  double label_scale = 64.0;
  double epsilon = 0.3;
  double t1 = 2000.0;
  double t2 = 4000.0;
  double alpha = 1.0;
  double beta = 1.0;
  cascade::ScheduleMode schedule_mode = cascade::ScheduleMode::AsWritten;
  cascade::Stage3Mode stage3_mode = cascade::Stage3Mode::AutoRouting;

  // baselines
  std::size_t patch_size = 34;
  std::size_t patch_iterations = 2000;

  // evaluation
  double pdl_threshold = 15.0 * 64.0 / 224.0;
  double pdl_max = 20.0;
  std::size_t pdl_steps = 40;

  std::uint64_t seed = 1;

  // paths (not part of the hash)
  std::string dataset_path = "data";
  std::string bundle_path = "bundle";

  void validate() const;

  static const std::vector<std::string>& keys();
  // Canonical text: every key in `keys()` order, doubles with 17 digits.
  std::string serialize() const;
  static RunConfig parse(const std::string& text, const std::string& origin = "<config>");
  static RunConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
  // Applies one `key = value` assignment; throws on unknown keys.
  void set(const std::string& key, const std::string& value);
  // FNV-1a of the canonical text without path keys, as 16 hex digits.
  std::string hash() const;
  // Same, over the data.* keys and the seed only: equal data hashes mean
  // identical generated datasets and splits.
  std::string data_hash() const;

  synth::GeneratorConfig generator() const;
  std::array<double, 3> split_fractions() const;
  cascade::CascadeConfig cascade() const;
  baselines::DirectConfig direct() const;
  baselines::PatchConfig patch() const;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

}  // namespace dfa::harness
