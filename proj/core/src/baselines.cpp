#include "dfa/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "dfa/rng.hpp"

namespace dfa::baselines {

namespace {

using geom::LandmarkSet;
using synth::SyntheticSample;
using cascade::StageData;
using cascade::train_network;

std::size_t image_side(std::span<const SyntheticSample> samples) {
  if (samples.empty()) throw std::invalid_argument("baselines: no samples");
  return samples.front().image.dim(2);
}

ad::ArchDescriptor patch_arch(const PatchConfig& c) {
  ad::ArchDescriptor a = c.stage1.arch;
  a.image_height = a.image_width = c.patch_size;
  a.aux_length = 0;
  a.landmarks = 1;
  a.clusters = 1;
  return a;
}

struct PatchBatch {
  std::shared_ptr<Tensor> crops;
  std::size_t empty = 0;
};

PatchBatch crop_all(std::span<const SyntheticSample> samples, std::span<const LandmarkSet> prev, std::size_t j,
                    std::size_t patch, std::span<const std::size_t> rows) {
  PatchBatch b;
  b.crops = std::make_shared<Tensor>(Shape{rows.size(), 1, patch, patch});
  const std::size_t per = patch * patch;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const SyntheticSample& s = samples[rows[r]];
    const geom::Point p = prev[rows[r]].coords[j];
    const Crop c = crop_patch(s.image, p.x * s.box.w + s.box.xc, p.y * s.box.h + s.box.yc, patch);
    b.empty += c.empty;
    std::copy(c.patch.values().begin(), c.patch.values().end(), b.crops->data() + r * per);
  }
  return b;
}

// Offsets predicted by one landmark's patch net for every sample.
std::vector<geom::Point> patch_offsets(const ad::StageNetwork& net, std::span<const SyntheticSample> samples,
                                       std::span<const LandmarkSet> prev, std::size_t j, std::size_t patch,
                                       std::size_t& empty) {
  std::vector<std::size_t> rows(samples.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  const PatchBatch b = crop_all(samples, prev, j, patch, rows);
  empty += b.empty;
  const ad::HeadValues h = cascade::evaluate_all(net, *b.crops, {});
  std::vector<geom::Point> out(samples.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = {h.positions[2 * i], h.positions[2 * i + 1]};
  return out;
}

ad::StageNetwork train_patch_net(std::span<const SyntheticSample> train, std::span<const LandmarkSet> prev,
                                 std::size_t j, const PatchConfig& config, std::uint64_t seed) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < train.size(); ++i)
    if (train[i].gt.visibility[j] != geom::Visibility::Truncated) rows.push_back(i);
  if (rows.empty())
    throw std::invalid_argument("patch cascade: landmark " + std::to_string(j) + " is truncated in every sample");
  const PatchBatch b = crop_all(train, prev, j, config.patch_size, rows);
  StageData d;
  d.images = b.crops;
  d.landmarks = 1;
  d.clusters = 1;
  d.pos_mask.assign(2 * rows.size(), 1.0);
  d.label_target.assign(rows.size(), 0.0);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const SyntheticSample& s = train[rows[r]];
    d.pos_target.push_back(s.gt.coords[j].x - prev[rows[r]].coords[j].x);
    d.pos_target.push_back(s.gt.coords[j].y - prev[rows[r]].coords[j].y);
    d.visibility.push_back(static_cast<int>(s.gt.visibility[j]));
    d.rows.push_back(r);
  }
  TrainConfig tc = config.patch_train;
  tc.use_visibility = false;
  tc.use_labels = false;
  return train_network(ad::StageNetwork::initialize(patch_arch(config), derive_seed(seed, "init")), d, tc,
                       derive_seed(seed, "train"))
      .net;
}

std::vector<LandmarkSet> apply_patch_stage(const std::vector<ad::StageNetwork>& nets,
                                           std::span<const SyntheticSample> samples, std::span<const LandmarkSet> prev,
                                           std::size_t patch, std::size_t& empty) {
  std::vector<LandmarkSet> out(prev.begin(), prev.end());
  for (std::size_t j = 0; j < nets.size(); ++j) {
    const auto off = patch_offsets(nets[j], samples, prev, j, patch, empty);
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i].coords[j].x += off[i].x;
      out[i].coords[j].y += off[i].y;
    }
  }
  return out;
}

}  // namespace

DirectResult train_direct(std::span<const SyntheticSample> train, std::span<const SyntheticSample> val,
                          const DirectConfig& config, bool with_pseudolabels, bool with_visibility) {
  cascade::CascadeConfig c;
  c.arch = config.arch;
  c.clusters = config.clusters;
  c.temperature = config.temperature;
  c.label_scale = config.label_scale;
  c.seed = config.seed;
  c.stage1 = config.train;
  c.stage1.use_labels = with_pseudolabels;
  c.stage1.use_visibility = with_visibility;
  cascade::Stage1Result r = cascade::train_stage1(train, val, c);
  DirectResult out;
  out.net = std::move(r.net);
  out.log = std::move(r.log);
  if (with_pseudolabels) out.clusters = std::move(r.clusters);
  return out;
}

std::vector<LandmarkSet> predict_direct(const ad::StageNetwork& net, std::span<const SyntheticSample> samples) {
  if (samples.empty()) return {};
  const auto images = cascade::stack_images(samples);
  const ad::HeadValues h = cascade::evaluate_all(net, *images, {});
  std::vector<LandmarkSet> like(samples.size());
  for (auto& l : like) l.visibility.assign(net.arch().landmarks, geom::Visibility::Visible);
  return cascade::to_landmarks(h.positions, &h.visibility_logits, like);
}

std::size_t default_patch_size(std::size_t image_side) {
  return static_cast<std::size_t>(std::lround(120.0 / 224.0 * static_cast<double>(image_side)));
}

Crop crop_patch(const Tensor& image, double cx, double cy, std::size_t patch) {
  if (image.rank() != 3 || image.dim(0) != 1) throw std::invalid_argument("crop: image must be [1,H,W]");
  if (patch == 0) throw std::invalid_argument("crop: patch size must be positive");
  const auto h = static_cast<long>(image.dim(1)), w = static_cast<long>(image.dim(2));
  Crop c{Tensor({1, patch, patch}), true};
  if (!std::isfinite(cx) || !std::isfinite(cy)) return c;
  const long half = static_cast<long>(patch) / 2;
  // Pixel centres sit at integer + 0.5.
  const long x0 = std::lround(std::floor(cx)) - half, y0 = std::lround(std::floor(cy)) - half;
  for (long y = 0; y < static_cast<long>(patch); ++y) {
    const long sy = y0 + y;
    if (sy < 0 || sy >= h) continue;
    for (long x = 0; x < static_cast<long>(patch); ++x) {
      const long sx = x0 + x;
      if (sx < 0 || sx >= w) continue;
      c.patch[static_cast<std::size_t>(y) * patch + static_cast<std::size_t>(x)] =
          image[static_cast<std::size_t>(sy * w + sx)];
      c.empty = false;
    }
  }
  return c;
}

PatchCascadeModel train_patch_cascade(std::span<const SyntheticSample> train, std::span<const SyntheticSample> val,
                                      const PatchConfig& config) {
  if (train.empty()) throw std::invalid_argument("patch cascade: empty training set");
  if (config.patch_size == 0 || config.patch_size > image_side(train))
    throw std::invalid_argument("patch cascade: patch size must be in [1, image side]");
  PatchCascadeModel m;
  m.patch_size = config.patch_size;
  m.stage1 = train_direct(train, val, config.stage1, false, true).net;
  const std::size_t n = config.stage1.arch.landmarks;
  std::vector<LandmarkSet> prev = predict_direct(m.stage1, train);
  std::size_t ignored = 0;
  for (int stage = 2; stage <= 3; ++stage) {
    auto& nets = stage == 2 ? m.stage2 : m.stage3;
    for (std::size_t j = 0; j < n; ++j)
      nets.push_back(train_patch_net(train, prev, j, config,
                                     derive_seed(config.stage1.seed, "patch.stage" + std::to_string(stage), j)));
    prev = apply_patch_stage(nets, train, prev, m.patch_size, ignored);
  }
  return m;
}

std::vector<PatchPrediction> predict_patch_cascade(const PatchCascadeModel& model,
                                                   std::span<const SyntheticSample> samples) {
  std::vector<PatchPrediction> out(samples.size());
  if (samples.empty()) return out;
  std::size_t total_empty = 0;
  const std::vector<LandmarkSet> l1 = predict_direct(model.stage1, samples);
  const std::vector<LandmarkSet> l2 = apply_patch_stage(model.stage2, samples, l1, model.patch_size, total_empty);
  const std::vector<LandmarkSet> l3 = apply_patch_stage(model.stage3, samples, l2, model.patch_size, total_empty);
  // Flags are recounted per sample from the same crop rule.
  for (std::size_t i = 0; i < samples.size(); ++i) {
    out[i].stages = {l1[i], l2[i], l3[i]};
    for (int s = 0; s < 2; ++s) {
      const auto& prev = s == 0 ? l1[i] : l2[i];
      for (std::size_t j = 0; j < prev.size(); ++j) {
        const auto& smp = samples[i];
        const Crop c = crop_patch(smp.image, prev.coords[j].x * smp.box.w + smp.box.xc,
                                  prev.coords[j].y * smp.box.h + smp.box.yc, model.patch_size);
        out[i].empty_crops += c.empty;
      }
    }
  }
  return out;
}

Comparison compare(std::span<const ModelEntry> models, std::span<const SyntheticSample> test, double threshold_px,
                   double max_threshold_px, std::size_t curve_steps) {
  if (models.empty()) throw std::invalid_argument("compare: no models");
  const auto gts = cascade::ground_truth(test);
  std::vector<geom::Subset> subsets;
  for (const auto& s : test) subsets.push_back(s.subset());
  const double side = static_cast<double>(image_side(test));
  const std::size_t n = gts.front().size();
  std::vector<std::string_view> names(synth::kLandmarkNames.begin(), synth::kLandmarkNames.end());
  std::vector<std::string> generic;
  if (names.size() != n) {
    names.clear();
    for (std::size_t i = 0; i < n; ++i) generic.push_back("landmark_" + std::to_string(i));
    for (const auto& g : generic) names.push_back(g);
  }

  Comparison cmp;
  cmp.threshold_px = threshold_px;
  cmp.thresholds = report::threshold_grid(max_threshold_px, curve_steps);
  std::vector<std::vector<report::MetricRow>> per_model;
  for (const ModelEntry& m : models) {
    if (m.predictions.size() != test.size())
      throw std::invalid_argument("compare: model '" + m.name + "' has " + std::to_string(m.predictions.size()) +
                                  " predictions for " + std::to_string(test.size()) + " test samples");
    per_model.push_back(report::metric_rows(m.predictions, gts, subsets, names, threshold_px, side));
    cmp.curves.push_back({m.name, cmp.thresholds, report::pdl_curve(m.predictions, gts, cmp.thresholds, side)});
  }
  for (std::size_t k = 0; k < models.size(); ++k)
    for (std::size_t i = 0; i < n; ++i) {
      const auto& r = per_model[k][i];
      cmp.rows.push_back({models[k].name, "landmark", r.landmark, r.ne, r.pdl, r.count});
    }
  for (std::size_t k = 0; k < models.size(); ++k)
    for (std::size_t s = 0; s < geom::kAllSubsets.size(); ++s) {
      const auto& r = per_model[k][n + 1 + s];
      cmp.rows.push_back({models[k].name, "subset", r.subset, r.ne, r.pdl, r.count});
    }
  return cmp;
}

void write_comparison(const std::filesystem::path& dir, const Comparison& cmp, std::span<const ModelEntry> models,
                      std::span<const SyntheticSample> test) {
  std::filesystem::create_directories(dir);
  char thr[32];
  std::snprintf(thr, sizeof thr, "%.2f", cmp.threshold_px);
  std::ostringstream c;
  c << "model,group,key,NE,PDL@" << thr << "px,sample_count\n";
  for (const auto& r : cmp.rows)
    c << r.model << ',' << r.group << ',' << r.key << ',' << report::fmt(r.ne) << ',' << report::fmt(r.pdl) << ','
      << r.count << '\n';
  report::write_text(dir / "compare.csv", c.str());

  std::ostringstream p;
  p << "threshold_px";
  for (const auto& s : cmp.curves) p << ',' << s.name;
  p << '\n';
  for (std::size_t i = 0; i < cmp.thresholds.size(); ++i) {
    p << report::fmt(cmp.thresholds[i]);
    for (const auto& s : cmp.curves) p << ',' << report::fmt(s.y[i]);
    p << '\n';
  }
  report::write_text(dir / "pdl_curves.csv", p.str());
  report::write_text(dir / "pdl_curves.svg",
                     report::svg_line_plot("Detected landmarks vs. distance threshold", "distance threshold [px]",
                                           "PDL", cmp.curves));

  const auto gts = cascade::ground_truth(test);
  std::ostringstream m;
  m << "model,trained_networks,mean_NE\n";
  for (const auto& e : models)
    m << e.name << ',' << e.trained_networks << ',' << report::fmt(cascade::mean_ne(e.predictions, gts)) << '\n';
  report::write_text(dir / "models.csv", m.str());
}

}  // namespace dfa::baselines
