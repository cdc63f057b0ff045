#include "dfa/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

#include "dfa/optimizer.hpp"

namespace dfa::cascade {

void LossSchedule::validate() const {
  if (!(t1 > 0.0) || !(t2 > t1)) throw std::invalid_argument("loss schedule: need 0 < t1 < t2");
  if (alpha < 0.0 || beta < 0.0) throw std::invalid_argument("loss schedule: base weights must be nonnegative");
}

double schedule_weight(double t, double base, const LossSchedule& sched) {
  if (t < sched.t1) return base;
  if (t >= sched.t2) return 0.0;
  const double span = sched.t2 - sched.t1;
  if (sched.mode == ScheduleMode::AsWritten) return (t - sched.t1) / span * base;
  return (sched.t2 - t) / span * base;
}

LossNodes overall_loss(ad::Graph& graph, const ad::HeadNodes& heads, Tensor pos_target, Tensor pos_mask,
                       std::vector<int> visibility, Tensor label_target, double alpha, double beta) {
  LossNodes n{};
  n.positions = graph.euclidean_loss(heads.positions, std::move(pos_target), std::move(pos_mask));
  n.visibility = graph.logistic_loss(heads.visibility_logits, std::move(visibility));
  Tensor ones(label_target.shape(), 1.0);
  n.labels = graph.euclidean_loss(heads.pseudolabels, std::move(label_target), std::move(ones));
  n.total = graph.add({n.positions, graph.scale(n.visibility, alpha), graph.scale(n.labels, beta)});
  return n;
}

void StageData::validate() const {
  if (!images || images->rank() != 4) throw std::invalid_argument("stage data: images must be [n,C,H,W]");
  const std::size_t n = images->dim(0);
  if (landmarks == 0 || clusters == 0) throw std::invalid_argument("stage data: landmark/cluster counts unset");
  if (aux.size() != n * aux_length) throw std::invalid_argument("stage data: aux size mismatch");
  if (pos_target.size() != n * 2 * landmarks || pos_mask.size() != pos_target.size())
    throw std::invalid_argument("stage data: position target size mismatch");
  if (visibility.size() != n * landmarks) throw std::invalid_argument("stage data: visibility size mismatch");
  if (label_target.size() != n * clusters) throw std::invalid_argument("stage data: label target size mismatch");
  if (rows.empty()) throw std::invalid_argument("stage data: no training rows");
  for (std::size_t r : rows)
    if (r >= n) throw std::invalid_argument("stage data: row index out of range");
}

Tensor gather_images(const Tensor& images, std::span<const std::size_t> rows) {
  Shape shape = images.shape();
  const std::size_t per = images.size() / shape[0];
  shape[0] = rows.size();
  Tensor out(shape);
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(images.data() + rows[i] * per, per, out.data() + i * per);
  return out;
}

Tensor gather_rows(std::span<const double> values, std::size_t width, std::span<const std::size_t> rows) {
  if (width == 0) return Tensor();
  Tensor out({rows.size(), width});
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(values.data() + rows[i] * width, width, out.data() + i * width);
  return out;
}

ad::HeadValues evaluate_all(const ad::StageNetwork& net, const Tensor& images, std::span<const double> aux,
                            std::size_t chunk) {
  const std::size_t n = images.dim(0);
  const ad::ArchDescriptor& arch = net.arch();
  ad::HeadValues out{Tensor({n, 2 * arch.landmarks}), Tensor({n, 3 * arch.landmarks}), Tensor({n, arch.clusters})};
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t end = std::min(n, start + chunk);
    rows.resize(end - start);
    std::iota(rows.begin(), rows.end(), start);
    const Tensor batch = gather_images(images, rows);
    const Tensor aux_batch = gather_rows(aux, arch.aux_length, rows);
    const ad::HeadValues h = net.evaluate(batch, aux_batch);
    std::copy(h.positions.values().begin(), h.positions.values().end(), out.positions.data() + start * 2 * arch.landmarks);
    std::copy(h.visibility_logits.values().begin(), h.visibility_logits.values().end(),
              out.visibility_logits.data() + start * 3 * arch.landmarks);
    std::copy(h.pseudolabels.values().begin(), h.pseudolabels.values().end(),
              out.pseudolabels.data() + start * arch.clusters);
  }
  return out;
}

TrainResult train_network(ad::StageNetwork net, const StageData& data, const TrainConfig& config, std::uint64_t seed,
                          const Validator& validate) {
  data.validate();
  config.schedule.validate();
  if (config.batch_size == 0) throw std::invalid_argument("train: batch size must be positive");
  const ad::ArchDescriptor& arch = net.arch();
  if (arch.landmarks != data.landmarks || arch.clusters != data.clusters || arch.aux_length != data.aux_length)
    throw std::invalid_argument("train: network heads do not match stage data");

  ad::SgdMomentum sgd(config.learning_rate, config.momentum);
  std::mt19937_64 gen(seed);
  std::vector<std::size_t> order = data.rows;
  std::size_t cursor = order.size();
  const std::size_t batch = std::min(config.batch_size, order.size());
  const std::size_t n_pos = 2 * data.landmarks;

  TrainResult result;
  std::vector<std::size_t> rows(batch);
  std::vector<int> vis(batch * data.landmarks);
  for (std::size_t t = 0; t < config.iterations; ++t) {
    for (std::size_t i = 0; i < batch; ++i) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), gen);
        cursor = 0;
      }
      rows[i] = order[cursor++];
    }
    for (std::size_t i = 0; i < batch; ++i)
      std::copy_n(data.visibility.data() + rows[i] * data.landmarks, data.landmarks, vis.data() + i * data.landmarks);

    const double td = static_cast<double>(t);
    const double alpha = config.use_visibility ? schedule_weight(td, config.schedule.alpha, config.schedule) : 0.0;
    const double beta = config.use_labels ? schedule_weight(td, config.schedule.beta, config.schedule) : 0.0;

    ad::Graph graph;
    const ad::HeadNodes heads = net.forward(graph, gather_images(*data.images, rows),
                                            gather_rows(data.aux, data.aux_length, rows));
    const LossNodes loss = overall_loss(graph, heads, gather_rows(data.pos_target, n_pos, rows),
                                        gather_rows(data.pos_mask, n_pos, rows), vis,
                                        gather_rows(data.label_target, data.clusters, rows), alpha, beta);
    const double total = graph.value(loss.total)[0];
    if (!std::isfinite(total))
      throw std::runtime_error("training diverged: non-finite loss at iteration " + std::to_string(t));
    sgd.step(net.parameters(), ad::backward(graph, loss.total));

    const bool last = t + 1 == config.iterations;
    const bool log_now = (config.log_every > 0 && t % config.log_every == 0) || last;
    const bool eval_now = validate && ((config.eval_every > 0 && (t + 1) % config.eval_every == 0) || last);
    if (log_now || eval_now) {
      LogRow row;
      row.iteration = t;
      row.loss = {total, graph.value(loss.positions)[0], graph.value(loss.visibility)[0],
                  graph.value(loss.labels)[0], alpha, beta};
      if (eval_now) row.validation_ne = validate(net);
      result.log.push_back(row);
    }
  }
  result.net = std::move(net);
  return result;
}

}  // namespace dfa::cascade
