#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "dfa/graph.hpp"
#include "dfa/network.hpp"
#include "dfa/tensor.hpp"

namespace dfa::cascade {

enum class ScheduleMode { AsWritten, Decay };

// Piecewise auxiliary-loss weight: base until t1, a linear segment on
// [t1, t2), zero from t2 on. AsWritten ramps (t - t1)/(t2 - t1) * base;
// Decay ramps (t2 - t)/(t2 - t1) * base.
struct LossSchedule {
  double alpha = 1.0;
  double beta = 1.0;
  double t1 = 2000.0;
  double t2 = 4000.0;
  ScheduleMode mode = ScheduleMode::AsWritten;

  void validate() const;
};

double schedule_weight(double t, double base, const LossSchedule& sched);

struct LossBreakdown {
  double total = 0.0;
  double positions = 0.0;
  double visibility = 0.0;
  double labels = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
};

struct LossNodes {
  ad::NodeId total;
  ad::NodeId positions;
  ad::NodeId visibility;
  ad::NodeId labels;
};

// L = L_pos + alpha * L_vis + beta * L_labels over one batch of head outputs.
LossNodes overall_loss(ad::Graph& graph, const ad::HeadNodes& heads, Tensor pos_target, Tensor pos_mask,
                       std::vector<int> visibility, Tensor label_target, double alpha, double beta);

// Per-sample training targets for one stage. Images are shared, read-only.
struct StageData {
  std::shared_ptr<const Tensor> images;  // [n, C, H, W]
  std::size_t aux_length = 0;
  std::vector<double> aux;           // n * aux_length
  std::vector<double> pos_target;    // n * 2N
  std::vector<double> pos_mask;      // n * 2N
  std::vector<int> visibility;       // n * N
  std::vector<double> label_target;  // n * K
  std::size_t landmarks = 0;
  std::size_t clusters = 0;
  // Sample indices this stage trains on.
  std::vector<std::size_t> rows;

  void validate() const;
};

struct TrainConfig {
  std::size_t iterations = 6000;
  std::size_t batch_size = 32;
  double learning_rate = 0.01;
  double momentum = 0.9;
  LossSchedule schedule;
  bool use_visibility = true;
  bool use_labels = true;
  std::size_t log_every = 50;
  std::size_t eval_every = 500;
};

struct LogRow {
  std::size_t iteration = 0;
  LossBreakdown loss;
  std::optional<double> validation_ne;
};

struct TrainResult {
  ad::StageNetwork net;
  std::vector<LogRow> log;
};

using Validator = std::function<double(const ad::StageNetwork&)>;

// Mini-batch SGD over `data.rows`, reshuffled every epoch from `seed`.
// Throws std::runtime_error naming the iteration if the loss turns non-finite.
TrainResult train_network(ad::StageNetwork net, const StageData& data, const TrainConfig& config, std::uint64_t seed,
                          const Validator& validate = {});

// Gathers images [rows.size(), C, H, W] and aux rows for a batch.
Tensor gather_images(const Tensor& images, std::span<const std::size_t> rows);
Tensor gather_rows(std::span<const double> values, std::size_t width, std::span<const std::size_t> rows);

// Runs the network over every sample in chunks.
ad::HeadValues evaluate_all(const ad::StageNetwork& net, const Tensor& images, std::span<const double> aux,
                            std::size_t chunk = 64);

}  // namespace dfa::cascade
