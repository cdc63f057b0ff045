#include "dfa/cascade.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "dfa/checkpoint.hpp"
#include "dfa/rng.hpp"

namespace dfa::cascade {

namespace {

using geom::LandmarkSet;
using geom::Visibility;
using synth::SyntheticSample;

std::vector<Visibility> visibility_from_logits(std::span<const double> logits, std::size_t n) {
  std::vector<Visibility> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* l = logits.data() + 3 * i;
    int best = 0;
    for (int c = 1; c < 3; ++c)
      if (l[c] > l[best]) best = c;
    out[i] = static_cast<Visibility>(best);
  }
  return out;
}

double sample_ne(const LandmarkSet& pred, const LandmarkSet& gt) {
  return geom::normalized_error(pred, gt).mean.value_or(0.0);
}

std::vector<double> sample_errors(std::span<const LandmarkSet> preds, std::span<const LandmarkSet> gts) {
  std::vector<double> e(gts.size());
  for (std::size_t i = 0; i < gts.size(); ++i) e[i] = sample_ne(preds[i], gts[i]);
  return e;
}

std::vector<double> flatten_all(std::span<const LandmarkSet> sets) {
  std::vector<double> out;
  for (const auto& s : sets) {
    const auto f = s.flatten();
    out.insert(out.end(), f.begin(), f.end());
  }
  return out;
}

std::vector<double> center_distances(std::span<const std::vector<double>> points, const labels::KMeansResult& km) {
  std::vector<double> out(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& c = km.model.centers[km.assignments[i]];
    double s = 0.0;
    for (std::size_t j = 0; j < c.size(); ++j) s += (points[i][j] - c[j]) * (points[i][j] - c[j]);
    out[i] = std::sqrt(s);
  }
  return out;
}

std::vector<double> scaled(std::vector<double> v, double s) {
  for (double& x : v) x *= s;
  return v;
}

// Position targets relative to `base` (or absolute when base is empty), masked
// on truncated landmarks.
void fill_position_targets(StageData& d, std::span<const LandmarkSet> gts, std::span<const LandmarkSet> base) {
  const std::size_t n = d.landmarks;
  d.pos_target.assign(gts.size() * 2 * n, 0.0);
  d.pos_mask.assign(gts.size() * 2 * n, 0.0);
  d.visibility.assign(gts.size() * n, 0);
  for (std::size_t s = 0; s < gts.size(); ++s) {
    const LandmarkSet& gt = gts[s];
    if (gt.size() != n) throw std::invalid_argument("cascade: sample landmark count does not match the architecture");
    for (std::size_t i = 0; i < n; ++i) {
      d.visibility[s * n + i] = static_cast<int>(gt.visibility[i]);
      if (gt.visibility[i] == Visibility::Truncated) continue;
      double bx = 0.0, by = 0.0;
      if (!base.empty()) {
        bx = base[s].coords[i].x;
        by = base[s].coords[i].y;
      }
      d.pos_target[s * 2 * n + 2 * i] = gt.coords[i].x - bx;
      d.pos_target[s * 2 * n + 2 * i + 1] = gt.coords[i].y - by;
      d.pos_mask[s * 2 * n + 2 * i] = 1.0;
      d.pos_mask[s * 2 * n + 2 * i + 1] = 1.0;
    }
  }
}

void fill_label_targets(StageData& d, std::span<const std::vector<double>> points, const labels::ClusterModel& model) {
  d.label_target.clear();
  d.label_target.reserve(points.size() * model.k());
  for (const auto& p : points) {
    const auto f = labels::soft_pseudo_label(p, model);
    d.label_target.insert(d.label_target.end(), f.begin(), f.end());
  }
}

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> r(n);
  std::iota(r.begin(), r.end(), 0);
  return r;
}

ad::ArchDescriptor stage_arch(const CascadeConfig& c, std::size_t aux) {
  ad::ArchDescriptor a = c.arch;
  a.clusters = c.clusters;
  a.aux_length = aux;
  return a;
}

std::vector<LandmarkSet> run_stage1(const ad::StageNetwork& net, const Tensor& images, std::span<const LandmarkSet> like) {
  const ad::HeadValues h = evaluate_all(net, images, {});
  return to_landmarks(h.positions, &h.visibility_logits, like);
}

struct Stage2Out {
  std::vector<LandmarkSet> l2;
  Tensor labels;  // [n, K]
};

Stage2Out run_stage2(const ad::StageNetwork& net, const Tensor& images, std::span<const LandmarkSet> l1) {
  const ad::HeadValues h = evaluate_all(net, images, flatten_all(l1));
  Stage2Out out;
  out.l2.reserve(l1.size());
  const std::size_t w = 2 * net.arch().landmarks;
  for (std::size_t i = 0; i < l1.size(); ++i)
    out.l2.push_back(compose(l1[i], h.positions.values().subspan(i * w, w)));
  out.labels = h.pseudolabels;
  return out;
}

std::vector<double> stage3_aux(std::span<const LandmarkSet> l2, const Tensor& f2) {
  const std::size_t k = f2.dim(1);
  std::vector<double> aux;
  for (std::size_t i = 0; i < l2.size(); ++i) {
    const auto f = l2[i].flatten();
    aux.insert(aux.end(), f.begin(), f.end());
    aux.insert(aux.end(), f2.data() + i * k, f2.data() + (i + 1) * k);
  }
  return aux;
}

std::vector<LandmarkSet> apply_corrections(std::span<const LandmarkSet> prev, const Tensor& corrections) {
  std::vector<LandmarkSet> out;
  out.reserve(prev.size());
  const std::size_t w = corrections.dim(1);
  for (std::size_t i = 0; i < prev.size(); ++i) out.push_back(compose(prev[i], corrections.values().subspan(i * w, w)));
  return out;
}

std::string mode_name(Stage3Mode m) { return m == Stage3Mode::AutoRouting ? "auto-routing" : "two-branch-average"; }

Stage3Mode parse_mode(const std::string& s) {
  if (s == "auto-routing") return Stage3Mode::AutoRouting;
  if (s == "two-branch-average") return Stage3Mode::TwoBranchAverage;
  throw std::invalid_argument("unknown stage-3 mode '" + s + "'");
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void CascadeConfig::validate() const {
  arch.validate();
  if (clusters == 0) throw std::invalid_argument("cascade config: K must be at least 1");
  if (!(temperature > 0.0) || !std::isfinite(temperature))
    throw std::invalid_argument("cascade config: temperature must be positive");
  if (std::isnan(epsilon) || epsilon < 0.0) throw std::invalid_argument("cascade config: epsilon must be >= 0");
  if (!(label_scale > 0.0) || !std::isfinite(label_scale))
    throw std::invalid_argument("cascade config: label scale must be positive");
  for (const TrainConfig* t : {&stage1, &stage2, &stage3}) {
    t->schedule.validate();
    if (t->iterations == 0 || t->batch_size == 0)
      throw std::invalid_argument("cascade config: iterations and batch size must be positive");
  }
}

double routing_score(std::span<const double> f_hat, const labels::RoutingTable& table) {
  if (f_hat.size() != table.errors.size())
    throw std::invalid_argument("routing_score: pseudo-label length " + std::to_string(f_hat.size()) +
                                " does not match routing table size " + std::to_string(table.errors.size()));
  double g = 0.0;
  for (std::size_t k = 0; k < f_hat.size(); ++k) {
    if (std::isinf(table.errors[k])) {
      if (f_hat[k] > 0.0) return std::numeric_limits<double>::infinity();
      continue;
    }
    g += table.errors[k] * f_hat[k];
  }
  return g;
}

int route(double score, double epsilon) { return score < epsilon ? 1 : 2; }

bool CascadeModel::trained() const {
  auto ok = [](const ad::StageNetwork& n) { return !n.parameters().empty(); };
  if (!ok(stage1) || !ok(stage2) || !ok(stage3[0]) || !ok(stage3[1])) return false;
  for (const auto& c : clusters)
    if (c.k() == 0) return false;
  return routing.errors.size() == clusters[1].k();
}

const LandmarkSet& CascadePrediction::stage(int k) const {
  switch (k) {
    case 1: return stage1;
    case 2: return stage2;
    case 3: return stage3;
  }
  throw std::out_of_range("prediction stage must be 1, 2 or 3");
}

LandmarkSet compose(const LandmarkSet& prev, std::span<const double> correction) {
  if (correction.size() != 2 * prev.size()) throw std::invalid_argument("compose: correction length mismatch");
  LandmarkSet out = prev;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.coords[i].x += correction[2 * i];
    out.coords[i].y += correction[2 * i + 1];
  }
  return out;
}

std::shared_ptr<const Tensor> stack_images(std::span<const SyntheticSample> samples) {
  if (samples.empty()) throw std::invalid_argument("stack_images: no samples");
  Shape shape = samples.front().image.shape();
  const std::size_t per = samples.front().image.size();
  shape.insert(shape.begin(), samples.size());
  auto out = std::make_shared<Tensor>(shape);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].image.shape() != samples.front().image.shape())
      throw std::invalid_argument("stack_images: images of different shapes");
    std::copy(samples[i].image.values().begin(), samples[i].image.values().end(), out->data() + i * per);
  }
  return out;
}

std::vector<LandmarkSet> ground_truth(std::span<const SyntheticSample> samples) {
  std::vector<LandmarkSet> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.gt);
  return out;
}

std::vector<LandmarkSet> to_landmarks(const Tensor& positions, const Tensor* vis_logits, std::span<const LandmarkSet> like) {
  const std::size_t n = positions.dim(0);
  const std::size_t w = positions.dim(1);
  if (like.size() != n) throw std::invalid_argument("to_landmarks: sample count mismatch");
  std::vector<LandmarkSet> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<Visibility> vis = vis_logits
                                      ? visibility_from_logits(vis_logits->values().subspan(i * 3 * (w / 2), 3 * (w / 2)), w / 2)
                                      : like[i].visibility;
    out.push_back(LandmarkSet::from_flat(positions.values().subspan(i * w, w), std::move(vis)));
  }
  return out;
}

double mean_ne(std::span<const LandmarkSet> preds, std::span<const LandmarkSet> gts) {
  return geom::dataset_normalized_error(preds, gts).mean.value_or(0.0);
}

// --- prediction -----------------------------------------------------------

std::vector<CascadePrediction> predict(const CascadeModel& model, std::span<const SyntheticSample> samples) {
  if (!model.trained()) throw std::logic_error("predict: cascade model is not trained");
  if (samples.empty()) return {};
  const auto images = stack_images(samples);
  const std::size_t n = samples.size();
  const std::size_t lm = model.stage1.arch().landmarks;
  for (const auto& s : samples)
    if (s.gt.size() != lm && s.gt.size() != 0)
      throw std::invalid_argument("predict: sample has " + std::to_string(s.gt.size()) + " landmarks, model expects " +
                                  std::to_string(lm));

  std::vector<LandmarkSet> like(n);
  for (auto& l : like) l.visibility.assign(lm, Visibility::Visible);
  const auto l1 = run_stage1(model.stage1, *images, like);
  const Stage2Out s2 = run_stage2(model.stage2, *images, l1);
  const auto aux3 = stage3_aux(s2.l2, s2.labels);
  const ad::HeadValues b1 = evaluate_all(model.stage3[0], *images, aux3);
  const ad::HeadValues b2 = evaluate_all(model.stage3[1], *images, aux3);

  const std::size_t k = s2.labels.dim(1);
  const std::size_t w = 2 * lm;
  std::vector<CascadePrediction> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    CascadePrediction& p = out[i];
    p.stage1 = l1[i];
    p.stage2 = s2.l2[i];
    p.stage2_labels.assign(s2.labels.data() + i * k, s2.labels.data() + (i + 1) * k);
    p.routing_score = routing_score(p.stage2_labels, model.routing);
    p.branch = route(p.routing_score, model.routing.epsilon);
    std::vector<double> c(w);
    if (model.stage3_mode == Stage3Mode::AutoRouting) {
      const Tensor& src = p.branch == 1 ? b1.positions : b2.positions;
      std::copy_n(src.data() + i * w, w, c.data());
    } else {
      for (std::size_t j = 0; j < w; ++j) c[j] = 0.5 * (b1.positions[i * w + j] + b2.positions[i * w + j]);
    }
    p.stage3 = compose(p.stage2, c);
    p.pixels.visibility = p.stage3.visibility;
    p.pixels.coords = geom::denormalize_landmarks(p.stage3.coords, samples[i].box);
  }
  return out;
}

CascadePrediction predict(const CascadeModel& model, const Tensor& image, const geom::BBox& box) {
  box.validate();
  SyntheticSample s;
  s.image = image;
  s.box = box;
  return predict(model, std::span<const SyntheticSample>(&s, 1)).front();
}

// --- training -------------------------------------------------------------

ad::StageNetwork warm_start(const ad::StageNetwork& prev, const ad::ArchDescriptor& arch, std::uint64_t seed) {
  ad::ArchDescriptor a = prev.arch(), b = arch;
  a.aux_length = b.aux_length = 0;
  a.clusters = b.clusters = 0;
  if (a != b) throw std::invalid_argument("warm_start: trunk layouts differ: " + prev.arch().to_string() + " vs " +
                                          arch.to_string());
  ad::StageNetwork net = ad::StageNetwork::initialize(arch, seed);
  ad::ParameterSet& dst = net.parameters();
  const ad::ParameterSet& src = prev.parameters();
  for (const auto& [name, t] : src)
    if (name.rfind("conv", 0) == 0 || name == "dense.bias" || name.rfind("vis.", 0) == 0) dst.at(name) = t;
  const Tensor& w_prev = src.at("dense.weight");
  Tensor& w = dst.at("dense.weight");
  const std::size_t trunk = arch.trunk_features(), cols_prev = w_prev.dim(1), cols = w.dim(1);
  w.fill(0.0);
  for (std::size_t r = 0; r < w.dim(0); ++r)
    std::copy_n(w_prev.data() + r * cols_prev, trunk, w.data() + r * cols);
  dst.at("pos.weight").fill(0.0);
  dst.at("pos.bias").fill(0.0);
  return net;
}

Stage1Result train_stage1(std::span<const SyntheticSample> train, std::span<const SyntheticSample> val,
                          const CascadeConfig& config) {
  config.validate();
  if (train.empty()) throw std::invalid_argument("train_stage1: empty training set");
  const auto gts = ground_truth(train);
  const ad::ArchDescriptor arch = stage_arch(config, 0);

  std::vector<std::vector<double>> points;
  points.reserve(gts.size());
  for (const auto& g : gts) points.push_back(scaled(labels::stage1_space(g), config.label_scale));
  labels::KMeansResult km = labels::kmeans(points, config.clusters, derive_seed(config.seed, "stage1.kmeans"),
                                           labels::Space::Configuration, config.temperature);
  std::vector<double> distances = center_distances(points, km);

  StageData d;
  d.images = stack_images(train);
  d.landmarks = arch.landmarks;
  d.clusters = arch.clusters;
  fill_position_targets(d, gts, {});
  fill_label_targets(d, points, km.model);
  d.rows = all_rows(train.size());

  Validator v;
  std::shared_ptr<const Tensor> val_images;
  std::vector<LandmarkSet> val_gts;
  if (!val.empty()) {
    val_images = stack_images(val);
    val_gts = ground_truth(val);
    v = [&](const ad::StageNetwork& net) { return mean_ne(run_stage1(net, *val_images, val_gts), val_gts); };
  }
  TrainResult tr = train_network(ad::StageNetwork::initialize(arch, derive_seed(config.seed, "stage1.init")), d,
                                 config.stage1, derive_seed(config.seed, "stage1.train"), v);

  Stage1Result r;
  r.net = std::move(tr.net);
  r.log = std::move(tr.log);
  r.clusters = std::move(km.model);
  r.assignment.distances = std::move(distances);
  r.assignment.assignments = std::move(km.assignments);
  r.assignment.sample_errors = sample_errors(run_stage1(r.net, *d.images, gts), gts);
  return r;
}

Stage2Result train_stage2(std::span<const SyntheticSample> train, std::span<const SyntheticSample> val,
                          const ad::StageNetwork& stage1, const CascadeConfig& config) {
  config.validate();
  if (train.empty()) throw std::invalid_argument("train_stage2: empty training set");
  const auto gts = ground_truth(train);
  const std::size_t n_lm = config.arch.landmarks;
  const ad::ArchDescriptor arch = stage_arch(config, 2 * n_lm);

  StageData d;
  d.images = stack_images(train);
  const auto l1 = run_stage1(stage1, *d.images, gts);

  std::vector<std::vector<double>> points;
  points.reserve(gts.size());
  for (std::size_t i = 0; i < gts.size(); ++i)
    points.push_back(scaled(labels::offset_space(l1[i], gts[i]), config.label_scale));
  labels::KMeansResult km = labels::kmeans(points, config.clusters, derive_seed(config.seed, "stage2.kmeans"),
                                           labels::Space::Offset, config.temperature);
  std::vector<double> distances = center_distances(points, km);

  d.landmarks = n_lm;
  d.clusters = arch.clusters;
  d.aux_length = arch.aux_length;
  d.aux = flatten_all(l1);
  fill_position_targets(d, gts, l1);
  fill_label_targets(d, points, km.model);
  d.rows = all_rows(train.size());

  Validator v;
  std::shared_ptr<const Tensor> val_images;
  std::vector<LandmarkSet> val_gts, val_l1;
  if (!val.empty()) {
    val_images = stack_images(val);
    val_gts = ground_truth(val);
    val_l1 = run_stage1(stage1, *val_images, val_gts);
    v = [&](const ad::StageNetwork& net) { return mean_ne(run_stage2(net, *val_images, val_l1).l2, val_gts); };
  }
  const std::uint64_t init_seed = derive_seed(config.seed, "stage2.init");
  TrainResult tr = train_network(config.warm_start ? warm_start(stage1, arch, init_seed)
                                                   : ad::StageNetwork::initialize(arch, init_seed),
                                 d, config.stage2, derive_seed(config.seed, "stage2.train"), v);

  Stage2Result r;
  r.net = std::move(tr.net);
  r.log = std::move(tr.log);
  r.assignment.distances = std::move(distances);
  r.assignment.assignments = std::move(km.assignments);
  // The stage-2 clusters group stage-1 offsets, so their error is stage-1 NE.
  r.assignment.sample_errors = sample_errors(l1, gts);
  r.routing = labels::cluster_error_table(r.assignment.assignments, r.assignment.sample_errors, config.clusters,
                                          config.epsilon);
  r.clusters = std::move(km.model);
  return r;
}

Stage3Result train_stage3(std::span<const SyntheticSample> train, std::span<const SyntheticSample> val,
                          const ad::StageNetwork& stage1, const ad::StageNetwork& stage2,
                          const labels::RoutingTable& routing, const CascadeConfig& config) {
  config.validate();
  if (train.empty()) throw std::invalid_argument("train_stage3: empty training set");
  if (routing.errors.size() != config.clusters)
    throw std::invalid_argument("train_stage3: routing table has " + std::to_string(routing.errors.size()) +
                                " entries, expected " + std::to_string(config.clusters));
  const auto gts = ground_truth(train);
  const std::size_t n_lm = config.arch.landmarks;
  const ad::ArchDescriptor arch = stage_arch(config, 2 * n_lm + config.clusters);

  StageData d;
  d.images = stack_images(train);
  const auto l1 = run_stage1(stage1, *d.images, gts);
  const Stage2Out s2 = run_stage2(stage2, *d.images, l1);

  std::vector<std::vector<double>> points;
  points.reserve(gts.size());
  for (std::size_t i = 0; i < gts.size(); ++i)
    points.push_back(labels::contextual_offset(scaled(labels::offset_space(s2.l2[i], gts[i]), config.label_scale)));
  labels::KMeansResult km = labels::kmeans(points, config.clusters, derive_seed(config.seed, "stage3.kmeans"),
                                           labels::Space::ContextualOffset, config.temperature);
  std::vector<double> distances = center_distances(points, km);

  d.landmarks = n_lm;
  d.clusters = arch.clusters;
  d.aux_length = arch.aux_length;
  d.aux = stage3_aux(s2.l2, s2.labels);
  fill_position_targets(d, gts, s2.l2);
  fill_label_targets(d, points, km.model);

  Stage3Result r;
  const std::size_t k = s2.labels.dim(1);
  std::array<std::vector<std::size_t>, 2> parts;
  r.routes.resize(gts.size());
  for (std::size_t i = 0; i < gts.size(); ++i) {
    const double g = routing_score(std::span<const double>(s2.labels.data() + i * k, k), routing);
    r.routes[i] = route(g, routing.epsilon);
    parts[r.routes[i] - 1].push_back(i);
  }
  if (config.stage3_mode == Stage3Mode::TwoBranchAverage) {
    parts[0] = parts[1] = all_rows(gts.size());
  } else if (parts[0].empty() || parts[1].empty()) {
    std::cerr << "warning: stage-3 routing left branch " << (parts[0].empty() ? 1 : 2)
              << " without training samples; training both branches on all data\n";
    parts[0] = parts[1] = all_rows(gts.size());
    r.fallback = true;
  }

  std::shared_ptr<const Tensor> val_images;
  std::vector<LandmarkSet> val_gts;
  Stage2Out val_s2;
  std::vector<double> val_aux;
  if (!val.empty()) {
    val_images = stack_images(val);
    val_gts = ground_truth(val);
    val_s2 = run_stage2(stage2, *val_images, run_stage1(stage1, *val_images, val_gts));
    val_aux = stage3_aux(val_s2.l2, val_s2.labels);
  }
  for (int b = 0; b < 2; ++b) {
    d.rows = parts[b];
    Validator v;
    if (!val.empty())
      v = [&](const ad::StageNetwork& net) {
        return mean_ne(apply_corrections(val_s2.l2, evaluate_all(net, *val_images, val_aux).positions), val_gts);
      };
    const std::uint64_t init_seed = derive_seed(config.seed, "stage3.init", b + 1);
    TrainResult tr = train_network(config.warm_start ? warm_start(stage2, arch, init_seed)
                                                     : ad::StageNetwork::initialize(arch, init_seed),
                                   d, config.stage3, derive_seed(config.seed, "stage3.train", b + 1), v);
    r.branches[b] = std::move(tr.net);
    r.logs[b] = std::move(tr.log);
  }
  r.assignment.distances = std::move(distances);
  r.assignment.assignments = std::move(km.assignments);
  r.assignment.sample_errors = sample_errors(s2.l2, gts);
  r.clusters = std::move(km.model);
  return r;
}

TrainingRun train_cascade(std::span<const SyntheticSample> train, std::span<const SyntheticSample> val,
                          const CascadeConfig& config) {
  TrainingRun run;
  run.stage1 = train_stage1(train, val, config);
  run.stage2 = train_stage2(train, val, run.stage1.net, config);
  run.stage3 = train_stage3(train, val, run.stage1.net, run.stage2.net, run.stage2.routing, config);
  CascadeModel& m = run.model;
  m.stage1 = run.stage1.net;
  m.stage2 = run.stage2.net;
  m.stage3 = run.stage3.branches;
  m.clusters = {run.stage1.clusters, run.stage2.clusters, run.stage3.clusters};
  m.routing = run.stage2.routing;
  m.label_scale = config.label_scale;
  m.stage3_mode = config.stage3_mode;
  return run;
}

// --- bundle ---------------------------------------------------------------

void write_manifest(const std::filesystem::path& path, const std::map<std::string, std::string>& entries) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write manifest " + path.string());
  for (const auto& [k, v] : entries) {
    if (k.find('=') != std::string::npos || k.find('\n') != std::string::npos || v.find('\n') != std::string::npos)
      throw std::invalid_argument("manifest: entry '" + k + "' cannot be serialized");
    os << k << " = " << v << "\n";
  }
}

std::map<std::string, std::string> read_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read manifest " + path.string());
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(is, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected 'key = value'");
    out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

void save_bundle(const std::filesystem::path& dir, const CascadeModel& model,
                 const std::map<std::string, std::string>& manifest) {
  if (!model.trained()) throw std::logic_error("save_bundle: cascade model is not trained");
  std::filesystem::create_directories(dir);
  ad::save_checkpoint(dir / "stage1.ckpt", model.stage1);
  ad::save_checkpoint(dir / "stage2.ckpt", model.stage2);
  ad::save_checkpoint(dir / "stage3_branch1.ckpt", model.stage3[0]);
  ad::save_checkpoint(dir / "stage3_branch2.ckpt", model.stage3[1]);
  for (int s = 0; s < 3; ++s)
    labels::save_cluster_model(dir / ("clusters_stage" + std::to_string(s + 1) + ".bin"), model.clusters[s]);
  labels::save_routing_table(dir / "routing.csv", model.routing);
  std::map<std::string, std::string> m = manifest;
  m["bundle_version"] = "1";
  m["label_scale"] = format_double(model.label_scale);
  m["stage3_mode"] = mode_name(model.stage3_mode);
  m["trained_networks"] = std::to_string(CascadeModel::trained_network_count());
  write_manifest(dir / "manifest.txt", m);
}

CascadeModel load_bundle(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw std::runtime_error("bundle directory not found: " + dir.string());
  const auto m = read_manifest(dir / "manifest.txt");
  auto get = [&](const std::string& k) {
    const auto it = m.find(k);
    if (it == m.end()) throw std::runtime_error("bundle manifest lacks '" + k + "'");
    return it->second;
  };
  if (get("bundle_version") != "1") throw std::runtime_error("unsupported bundle version " + get("bundle_version"));
  CascadeModel model;
  model.stage1 = ad::load_checkpoint(dir / "stage1.ckpt");
  model.stage2 = ad::load_checkpoint(dir / "stage2.ckpt");
  model.stage3[0] = ad::load_checkpoint(dir / "stage3_branch1.ckpt");
  model.stage3[1] = ad::load_checkpoint(dir / "stage3_branch2.ckpt");
  for (int s = 0; s < 3; ++s)
    model.clusters[s] = labels::load_cluster_model(dir / ("clusters_stage" + std::to_string(s + 1) + ".bin"));
  model.routing = labels::load_routing_table(dir / "routing.csv");
  model.label_scale = std::stod(get("label_scale"));
  model.stage3_mode = parse_mode(get("stage3_mode"));
  if (!model.trained()) throw std::runtime_error("bundle " + dir.string() + " is incomplete");
  const std::size_t n = model.stage1.arch().landmarks;
  for (const auto* net : {&model.stage2, &model.stage3[0], &model.stage3[1]})
    if (net->arch().landmarks != n) throw std::runtime_error("bundle stages disagree on the landmark count");
  return model;
}

void write_training_log(const std::filesystem::path& path, std::span<const LogRow> log) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write training log " + path.string());
  os << "iteration,L_pos,L_vis,L_labels,alpha,beta,validation_ne\n";
  for (const LogRow& r : log) {
    os << r.iteration << ',' << format_double(r.loss.positions) << ',' << format_double(r.loss.visibility) << ','
       << format_double(r.loss.labels) << ',' << format_double(r.loss.alpha) << ',' << format_double(r.loss.beta)
       << ',';
    if (r.validation_ne) os << format_double(*r.validation_ne);
    os << '\n';
  }
}

}  // namespace dfa::cascade
