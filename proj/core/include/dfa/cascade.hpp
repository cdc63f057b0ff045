#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dfa/geometry.hpp"
#include "dfa/network.hpp"
#include "dfa/pseudolabel.hpp"
#include "dfa/synth.hpp"
#include "dfa/trainer.hpp"

namespace dfa::cascade {

enum class Stage3Mode {
  // Each sample goes through the branch selected by the routing threshold.
  AutoRouting,
  // Both branches see all data; predictions are averaged.
  TwoBranchAverage,
};

struct CascadeConfig {
  // Trunk and head layout shared by all stages; aux_length is set per stage.
  ad::ArchDescriptor arch;
  std::size_t clusters = 20;
  double temperature = 20.0;
  double epsilon = 0.3;
  // Clustering spaces are built in normalized units and multiplied by this
  // factor (pixels per normalized unit) before k-means and soft labels.
  double label_scale = 64.0;
  TrainConfig stage1;
  TrainConfig stage2;
  TrainConfig stage3;
  Stage3Mode stage3_mode = Stage3Mode::AutoRouting;
  // Stage-2/3 nets start from the previous stage's trunk with a zero
  // correction head; off means fresh Glorot initialization.
  bool warm_start = true;
  std::uint64_t seed = 0;

  void validate() const;
};

// Scalar error magnitude G = sum_k e_k * f_k. A +inf cluster error counts
// only when its label weight is positive, making G = +inf.
double routing_score(std::span<const double> f_hat, const labels::RoutingTable& table);
// Branch 1 iff G < epsilon, otherwise branch 2.
int route(double score, double epsilon);

struct CascadeModel {
  ad::StageNetwork stage1;
  ad::StageNetwork stage2;
  std::array<ad::StageNetwork, 2> stage3;
  std::array<labels::ClusterModel, 3> clusters;
  labels::RoutingTable routing;
  double label_scale = 64.0;
  Stage3Mode stage3_mode = Stage3Mode::AutoRouting;

  bool trained() const;
  // Networks trained for this cascade: stage-1, stage-2 and both branches.
  static constexpr std::size_t trained_network_count() { return 4; }
};

struct CascadePrediction {
  geom::LandmarkSet stage1;  // normalized
  geom::LandmarkSet stage2;
  geom::LandmarkSet stage3;
  geom::LandmarkSet pixels;  // final estimate in pixel coordinates
  std::vector<double> stage2_labels;  // predicted f^2
  double routing_score = 0.0;
  int branch = 1;

  const geom::LandmarkSet& stage(int k) const;
};

// prev + correction, per coordinate; visibility kept from prev.
geom::LandmarkSet compose(const geom::LandmarkSet& prev, std::span<const double> correction);

// Stage composition: l2 = l1 + c2, l3 = l2 + c3. Visibility comes from the
// stage-1 head. Thread-safe on a shared model.
std::vector<CascadePrediction> predict(const CascadeModel& model, std::span<const synth::SyntheticSample> samples);
CascadePrediction predict(const CascadeModel& model, const Tensor& image, const geom::BBox& box);

// --- stage-wise training -------------------------------------------------

// Glorot-initialized net for `arch`, then: conv and dense trunk weights copied
// from `prev` (aux columns of the dense layer zeroed), visibility head copied,
// position head zeroed. `prev` must share the trunk layout.
ad::StageNetwork warm_start(const ad::StageNetwork& prev, const ad::ArchDescriptor& arch, std::uint64_t seed);

struct ClusterAssignment {
  std::vector<std::size_t> assignments;
  // Per-sample mean NE of the estimate whose error the stage clusters.
  std::vector<double> sample_errors;
  // l2 distance from each sample's clustering-space point to its center.
  std::vector<double> distances;
};

struct Stage1Result {
  ad::StageNetwork net;
  labels::ClusterModel clusters;
  ClusterAssignment assignment;
  std::vector<LogRow> log;
};

struct Stage2Result {
  ad::StageNetwork net;
  labels::ClusterModel clusters;
  labels::RoutingTable routing;
  ClusterAssignment assignment;
  std::vector<LogRow> log;
};

struct Stage3Result {
  std::array<ad::StageNetwork, 2> branches;
  labels::ClusterModel clusters;
  ClusterAssignment assignment;
  std::array<std::vector<LogRow>, 2> logs;
  // Branch chosen for every training sample (1 or 2).
  std::vector<int> routes;
  // True when one partition was empty and both branches saw all data.
  bool fallback = false;
};

Stage1Result train_stage1(std::span<const synth::SyntheticSample> train, std::span<const synth::SyntheticSample> val,
                          const CascadeConfig& config);
Stage2Result train_stage2(std::span<const synth::SyntheticSample> train, std::span<const synth::SyntheticSample> val,
                          const ad::StageNetwork& stage1, const CascadeConfig& config);
Stage3Result train_stage3(std::span<const synth::SyntheticSample> train, std::span<const synth::SyntheticSample> val,
                          const ad::StageNetwork& stage1, const ad::StageNetwork& stage2,
                          const labels::RoutingTable& routing, const CascadeConfig& config);

struct TrainingRun {
  CascadeModel model;
  Stage1Result stage1;
  Stage2Result stage2;
  Stage3Result stage3;
};

TrainingRun train_cascade(std::span<const synth::SyntheticSample> train, std::span<const synth::SyntheticSample> val,
                          const CascadeConfig& config);

// --- helpers shared with the baselines ------------------------------------

std::shared_ptr<const Tensor> stack_images(std::span<const synth::SyntheticSample> samples);
std::vector<geom::LandmarkSet> ground_truth(std::span<const synth::SyntheticSample> samples);
// Positions head output [n, 2N] -> landmark sets with visibility from `vis_logits`
// when given, else copied from `like`.
std::vector<geom::LandmarkSet> to_landmarks(const Tensor& positions, const Tensor* vis_logits,
                                            std::span<const geom::LandmarkSet> like);
double mean_ne(std::span<const geom::LandmarkSet> preds, std::span<const geom::LandmarkSet> gts);

// --- bundle ---------------------------------------------------------------

// Directory layout: stage1.ckpt, stage2.ckpt, stage3_branch1.ckpt,
// stage3_branch2.ckpt, clusters_stage{1,2,3}.bin, routing.csv, manifest.txt.
void save_bundle(const std::filesystem::path& dir, const CascadeModel& model,
                 const std::map<std::string, std::string>& manifest);
CascadeModel load_bundle(const std::filesystem::path& dir);
std::map<std::string, std::string> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::map<std::string, std::string>& entries);

// iteration,L_pos,L_vis,L_labels,alpha,beta,validation_ne
void write_training_log(const std::filesystem::path& path, std::span<const LogRow> log);

}  // namespace dfa::cascade
