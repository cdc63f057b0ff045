#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include "dfa/baselines.hpp"
#include "dfa/cascade.hpp"
#include "dfa/report.hpp"
#include "dfa/rng.hpp"

namespace dfa::cli {

namespace fs = std::filesystem;
using harness::RunConfig;
using synth::SyntheticSample;

namespace {

constexpr const char* kSplits[] = {"train", "val", "test"};

std::map<std::string, std::string> read_manifest_at(const fs::path& path, const char* what) {
  if (!fs::exists(path)) throw std::runtime_error(std::string(what) + " not found: " + path.string());
  return cascade::read_manifest(path);
}

std::string manifest_value(const std::map<std::string, std::string>& m, const std::string& key,
                           const fs::path& where) {
  auto it = m.find(key);
  if (it == m.end()) throw std::runtime_error(where.string() + ": missing key '" + key + "'");
  return it->second;
}

void check_dataset_matches(const fs::path& data, const RunConfig& cfg) {
  const auto m = read_manifest_at(data / "manifest.txt", "dataset");
  const auto h = manifest_value(m, "data_hash", data / "manifest.txt");
  if (h != cfg.data_hash())
    throw std::runtime_error("dataset " + data.string() + " was generated with data hash " + h +
                             ", config expects " + cfg.data_hash());
}

std::vector<geom::Subset> subsets_of(std::span<const SyntheticSample> s) {
  std::vector<geom::Subset> out;
  out.reserve(s.size());
  for (const auto& x : s) out.push_back(x.subset());
  return out;
}

std::vector<std::string_view> landmark_names(std::size_t n, std::vector<std::string>& storage) {
  if (n == synth::kLandmarkCount) return {synth::kLandmarkNames.begin(), synth::kLandmarkNames.end()};
  storage.clear();
  for (std::size_t i = 0; i < n; ++i) storage.push_back("landmark_" + std::to_string(i));
  return {storage.begin(), storage.end()};
}

// The bundle's own config unless --config was given.
RunConfig bundle_config(const GlobalOptions& g, const fs::path& bundle) {
  if (g.config || !fs::exists(bundle / "config.txt")) return resolve_config(g);
  GlobalOptions h = g;
  h.config = bundle / "config.txt";
  return resolve_config(h);
}

fs::path bundle_path(const std::optional<fs::path>& opt, const RunConfig& cfg) {
  fs::path b = opt.value_or(cfg.bundle_path);
  if (!fs::exists(b / "manifest.txt")) throw std::runtime_error("bundle not found: " + b.string());
  return b;
}

fs::path dataset_path(const std::optional<fs::path>& opt, const RunConfig& cfg, const fs::path* bundle = nullptr) {
  if (opt) return *opt;
  if (bundle) {
    const auto m = cascade::read_manifest(*bundle / "manifest.txt");
    if (auto it = m.find("dataset"); it != m.end()) return it->second;
  }
  return cfg.dataset_path;
}

// Round-trippable; used where files are cross-checked against binary data.
std::string exact(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_log(const fs::path& path, std::span<const cascade::LogRow> log) { cascade::write_training_log(path, log); }

void write_assignments(const fs::path& path, std::span<const SyntheticSample> train,
                       const cascade::ClusterAssignment& a, const std::vector<int>* routes) {
  std::ostringstream s;
  s << "sample_id,cluster,error,distance" << (routes ? ",branch" : "") << '\n';
  for (std::size_t i = 0; i < train.size(); ++i) {
    s << train[i].id << ',' << a.assignments[i] << ',' << exact(a.sample_errors[i]) << ',' << exact(a.distances[i]);
    if (routes) s << ',' << (*routes)[i];
    s << '\n';
  }
  report::write_text(path, s.str());
}

struct AssignmentRow {
  std::size_t sample_id;
  std::size_t cluster;
  double error;
  double distance;
};

std::vector<AssignmentRow> read_assignments(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<AssignmentRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    AssignmentRow r{};
    char comma;
    std::istringstream ls(line);
    if (!(ls >> r.sample_id >> comma >> r.cluster >> comma >> r.error >> comma >> r.distance))
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": malformed row");
    rows.push_back(r);
  }
  return rows;
}

std::string pad(std::string_view s, std::size_t w) {
  std::string out(s);
  if (out.size() < w) out.append(w - out.size(), ' ');
  return out;
}

}  // namespace

RunConfig resolve_config(const GlobalOptions& g) {
  RunConfig c = g.config ? RunConfig::load(*g.config) : RunConfig{};
  if (g.seed) c.seed = *g.seed;
  c.validate();
  return c;
}

void prepare_output(const fs::path& dir, bool force) {
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw std::runtime_error(dir.string() + " exists and is not a directory");
    if (!fs::is_empty(dir) && !force)
      throw OutputExists(dir.string() + " already exists; pass --force to overwrite");
  }
  fs::create_directories(dir);
}

std::vector<SyntheticSample> load_split(const fs::path& dir, const std::string& split) {
  if (std::find(std::begin(kSplits), std::end(kSplits), split) == std::end(kSplits))
    throw std::invalid_argument("unknown split '" + split + "' (expected train, val or test)");
  const fs::path p = dir / split;
  if (!fs::exists(p / "annotations.csv")) throw std::runtime_error("dataset split not found: " + p.string());
  return synth::load_dataset(p);
}

synth::Splits load_splits(const fs::path& dir) {
  if (!fs::exists(dir)) throw std::runtime_error("dataset not found: " + dir.string());
  return {load_split(dir, "train"), load_split(dir, "val"), load_split(dir, "test")};
}

// --- generate --------------------------------------------------------------

fs::path cmd_generate(const GlobalOptions& g, std::ostream& out) {
  const RunConfig cfg = resolve_config(g);
  const fs::path dir = g.out.value_or(cfg.dataset_path);
  prepare_output(dir, g.force);

  const auto data = synth::generate_dataset(cfg.generator(), derive_seed(cfg.seed, "data"));
  const auto splits = synth::split(data, cfg.split_fractions(), derive_seed(cfg.seed, "split"));
  synth::save_dataset(dir / "train", splits.train);
  synth::save_dataset(dir / "val", splits.val);
  synth::save_dataset(dir / "test", splits.test);

  const auto hist = report::subset_histogram(subsets_of(data));
  std::map<std::string, std::string> m{
      {"config_hash", cfg.hash()},
      {"data_hash", cfg.data_hash()},
      {"seed", std::to_string(cfg.seed)},
      {"image_size", std::to_string(cfg.image_size)},
      {"landmarks", std::to_string(synth::kLandmarkCount)},
      {"train_count", std::to_string(splits.train.size())},
      {"val_count", std::to_string(splits.val.size())},
      {"test_count", std::to_string(splits.test.size())},
  };
  for (std::size_t s = 0; s < hist.size(); ++s)
    m["subset." + std::string(geom::subset_name(geom::kAllSubsets[s]))] = std::to_string(hist[s]);
  cascade::write_manifest(dir / "manifest.txt", m);
  cfg.save(dir / "config.txt");

  out << "wrote " << data.size() << " samples to " << dir.string() << " (train " << splits.train.size() << ", val "
      << splits.val.size() << ", test " << splits.test.size() << ")\n";
  out << report::format_histogram(hist);
  return dir;
}

// --- train -----------------------------------------------------------------

fs::path cmd_train(const GlobalOptions& g, const TrainOptions& opt, std::ostream& out) {
  const RunConfig cfg = resolve_config(g);
  const fs::path data = dataset_path(opt.data, cfg);
  if (!fs::exists(data / "manifest.txt")) throw std::runtime_error("dataset not found: " + data.string());
  check_dataset_matches(data, cfg);
  const auto train = load_split(data, "train");
  const auto val = load_split(data, "val");

  const fs::path dir = g.out.value_or(cfg.bundle_path);
  prepare_output(dir, g.force);

  const auto run = cascade::train_cascade(train, val, cfg.cascade());
  cascade::save_bundle(dir, run.model,
                       {{"config_hash", cfg.hash()},
                        {"data_hash", cfg.data_hash()},
                        {"dataset", data.string()},
                        {"seed", std::to_string(cfg.seed)},
                        {"train_samples", std::to_string(train.size())},
                        {"stage3_fallback", run.stage3.fallback ? "1" : "0"}});
  cfg.save(dir / "config.txt");

  write_log(dir / "log_stage1.csv", run.stage1.log);
  write_log(dir / "log_stage2.csv", run.stage2.log);
  write_log(dir / "log_stage3_branch1.csv", run.stage3.logs[0]);
  write_log(dir / "log_stage3_branch2.csv", run.stage3.logs[1]);
  write_assignments(dir / "assignments_stage1.csv", train, run.stage1.assignment, nullptr);
  write_assignments(dir / "assignments_stage2.csv", train, run.stage2.assignment, nullptr);
  write_assignments(dir / "assignments_stage3.csv", train, run.stage3.assignment, &run.stage3.routes);

  const auto last_val = [](std::span<const cascade::LogRow> log) {
    for (auto it = log.rbegin(); it != log.rend(); ++it)
      if (it->validation_ne) return report::fmt(*it->validation_ne);
    return std::string("-");
  };
  const auto b1 = std::count(run.stage3.routes.begin(), run.stage3.routes.end(), 1);
  out << "trained cascade on " << train.size() << " samples; bundle " << dir.string() << "\n"
      << "  stage 1 validation NE " << last_val(run.stage1.log) << "\n"
      << "  stage 2 validation NE " << last_val(run.stage2.log) << "\n"
      << "  stage 3 validation NE " << last_val(run.stage3.logs[0]) << " (branch 1), "
      << last_val(run.stage3.logs[1]) << " (branch 2); " << b1 << " of " << train.size()
      << " training samples routed to branch 1" << (run.stage3.fallback ? " [fallback]" : "") << "\n";
  return dir;
}

// --- evaluate --------------------------------------------------------------

fs::path cmd_evaluate(const GlobalOptions& g, const EvaluateOptions& opt, std::ostream& out) {
  const fs::path bundle = bundle_path(opt.bundle, resolve_config(g));
  const RunConfig cfg = bundle_config(g, bundle);
  const fs::path data = dataset_path(opt.data, cfg, &bundle);
  const auto samples = load_split(data, opt.split);
  if (samples.empty()) throw std::runtime_error("split '" + opt.split + "' is empty");
  const auto model = cascade::load_bundle(bundle);

  const std::size_t n_bundle = model.stage1.arch().landmarks, n_data = samples.front().gt.size();
  if (n_bundle != n_data)
    throw std::runtime_error("bundle predicts " + std::to_string(n_bundle) + " landmarks but split '" + opt.split +
                             "' has " + std::to_string(n_data));
  const std::size_t side = samples.front().image.dim(2);
  if (model.stage1.arch().image_width != side)
    throw std::runtime_error("bundle expects " + std::to_string(model.stage1.arch().image_width) +
                             "-px images but split '" + opt.split + "' has " + std::to_string(side));

  const fs::path dir = g.out.value_or(bundle / ("eval_" + opt.split));
  prepare_output(dir, g.force);

  const auto gts = cascade::ground_truth(samples);
  const auto subsets = subsets_of(samples);
  std::array<std::vector<geom::LandmarkSet>, 3> stages;
  std::vector<cascade::CascadePrediction> preds;
  if (opt.ground_truth) {
    stages.fill(gts);
  } else {
    preds = cascade::predict(model, samples);
    for (const auto& p : preds)
      for (int s = 0; s < 3; ++s) stages[s].push_back(p.stage(s + 1));
  }

  std::vector<std::string> storage;
  const auto names = landmark_names(n_data, storage);
  const double thr = cfg.pdl_threshold;
  const auto grid = report::threshold_grid(cfg.pdl_max, cfg.pdl_steps);
  std::vector<report::Series> curves;
  std::array<std::vector<report::MetricRow>, 3> rows;
  for (int s = 0; s < 3; ++s) {
    rows[s] = report::metric_rows(stages[s], gts, subsets, names, thr, static_cast<double>(side));
    report::write_metrics_csv(dir / ("metrics_stage" + std::to_string(s + 1) + ".csv"), rows[s], thr);
    curves.push_back({"stage " + std::to_string(s + 1), grid,
                      report::pdl_curve(stages[s], gts, grid, static_cast<double>(side))});
  }

  std::ostringstream c;
  c << "threshold_px,stage1,stage2,stage3\n";
  for (std::size_t i = 0; i < grid.size(); ++i)
    c << report::fmt(grid[i]) << ',' << report::fmt(curves[0].y[i]) << ',' << report::fmt(curves[1].y[i]) << ','
      << report::fmt(curves[2].y[i]) << '\n';
  report::write_text(dir / "pdl_curves.csv", c.str());
  report::write_text(dir / "pdl_curves.svg",
                     report::svg_line_plot("PDL by stage (" + opt.split + ")", "distance threshold [px]", "PDL", curves));

  if (!preds.empty()) {
    std::ostringstream p;
    p << "sample_id,subset,branch,routing_score";
    for (std::size_t j = 0; j < n_data; ++j) p << ",x" << j << ",y" << j;
    p << '\n';
    for (std::size_t i = 0; i < samples.size(); ++i) {
      p << samples[i].id << ',' << geom::subset_name(subsets[i]) << ',' << preds[i].branch << ','
        << report::fmt(preds[i].routing_score);
      for (const auto& pt : preds[i].pixels.coords) p << ',' << report::fmt(pt.x) << ',' << report::fmt(pt.y);
      p << '\n';
    }
    report::write_text(dir / "predictions.csv", p.str());
  }

  out << "evaluated " << samples.size() << " '" << opt.split << "' samples"
      << (opt.ground_truth ? " (ground truth as prediction)" : "") << "; reports in " << dir.string() << "\n";
  out << pad("", 14) << pad("stage 1", 10) << pad("stage 2", 10) << "stage 3\n";
  for (std::size_t r = n_data; r < rows[0].size(); ++r) {
    out << pad(rows[0][r].subset == "all" ? "mean NE" : rows[0][r].subset, 14);
    for (int s = 0; s < 3; ++s) out << pad(report::fmt(rows[s][r].ne), 10);
    out << "\n";
  }
  return dir;
}

// --- inspect-clusters ------------------------------------------------------

fs::path cmd_inspect_clusters(const GlobalOptions& g, const InspectOptions& opt, std::ostream& out) {
  if (opt.stage < 1 || opt.stage > 3)
    throw std::invalid_argument("stage must be 1, 2 or 3, got " + std::to_string(opt.stage));
  if (opt.montage_columns == 0) throw std::invalid_argument("montage needs at least one column");
  const fs::path bundle = bundle_path(opt.bundle, resolve_config(g));
  const RunConfig cfg = bundle_config(g, bundle);
  const auto model = cascade::load_bundle(bundle);
  const auto& clusters = model.clusters[opt.stage - 1];
  const std::string tag = "stage" + std::to_string(opt.stage);
  const auto rows = read_assignments(bundle / ("assignments_" + tag + ".csv"));

  const std::size_t k = clusters.k();
  std::vector<std::size_t> population(k, 0);
  std::vector<double> error_sum(k, 0.0);
  std::vector<std::vector<const AssignmentRow*>> members(k);
  for (const auto& r : rows) {
    if (r.cluster >= k) throw std::runtime_error("assignment names cluster " + std::to_string(r.cluster));
    ++population[r.cluster];
    error_sum[r.cluster] += r.error;
    members[r.cluster].push_back(&r);
  }

  const fs::path dir = g.out.value_or(bundle / ("clusters_" + tag));
  prepare_output(dir, g.force);

  std::ostringstream c;
  c << "cluster_id,population,mean_ne";
  if (opt.stage == 2) c << ",routing_error";
  for (std::size_t d = 0; d < clusters.dim(); ++d) c << ",c" << d;
  c << '\n';
  for (std::size_t j = 0; j < k; ++j) {
    c << j << ',' << population[j] << ','
      << (population[j] ? report::fmt(error_sum[j] / static_cast<double>(population[j])) : "");
    if (opt.stage == 2) {
      const double e = model.routing.errors[j];
      c << ',' << (std::isinf(e) ? "inf" : exact(e));
    }
    for (double v : clusters.centers[j]) c << ',' << report::fmt(v);
    c << '\n';
  }
  report::write_text(dir / ("clusters_" + tag + ".csv"), c.str());

  // Montage: one row per cluster, nearest members first.
  const fs::path data = dataset_path(opt.data, cfg, &bundle);
  const auto train = load_split(data, "train");
  std::map<std::size_t, const SyntheticSample*> by_id;
  for (const auto& s : train) by_id[s.id] = &s;
  const std::size_t side = train.empty() ? cfg.image_size : train.front().image.dim(2);
  const std::size_t cell = side + 2, cols = opt.montage_columns;
  Tensor montage({1, k * cell, cols * cell}, 0.0);
  for (std::size_t j = 0; j < k; ++j) {
    auto& mem = members[j];
    std::stable_sort(mem.begin(), mem.end(), [](const AssignmentRow* a, const AssignmentRow* b) {
      return a->distance < b->distance || (a->distance == b->distance && a->sample_id < b->sample_id);
    });
    for (std::size_t m = 0; m < std::min(cols, mem.size()); ++m) {
      auto it = by_id.find(mem[m]->sample_id);
      if (it == by_id.end())
        throw std::runtime_error("sample " + std::to_string(mem[m]->sample_id) + " missing from " +
                                 (data / "train").string());
      const Tensor& img = it->second->image;
      for (std::size_t y = 0; y < side; ++y)
        for (std::size_t x = 0; x < side; ++x)
          montage[(j * cell + 1 + y) * cols * cell + m * cell + 1 + x] = img[y * side + x];
    }
  }
  synth::write_pgm(dir / ("montage_" + tag + ".pgm"), montage);

  const std::size_t total = std::accumulate(population.begin(), population.end(), std::size_t{0});
  out << tag << ": " << k << " clusters in " << labels::space_name(clusters.space) << " space, " << total
      << " training samples; report in " << dir.string() << "\n";
  for (std::size_t j = 0; j < k; ++j) {
    out << "  " << pad(std::to_string(j), 4) << pad(std::to_string(population[j]), 7)
        << pad(population[j] ? report::fmt(error_sum[j] / static_cast<double>(population[j])) : "-", 10);
    if (opt.stage == 2) out << "e=" << report::fmt(model.routing.errors[j]);
    out << "\n";
  }
  return dir;
}

// --- compare-baselines -----------------------------------------------------

fs::path cmd_compare_baselines(const GlobalOptions& g, const CompareOptions& opt, std::ostream& out) {
  const RunConfig cfg = resolve_config(g);
  const fs::path data = dataset_path(opt.data, cfg);
  if (!fs::exists(data / "manifest.txt")) throw std::runtime_error("dataset not found: " + data.string());
  check_dataset_matches(data, cfg);
  const auto splits = load_splits(data);

  cascade::CascadeModel dfa_model;
  if (opt.bundle) {
    const auto m = read_manifest_at(*opt.bundle / "manifest.txt", "bundle");
    const auto h = manifest_value(m, "config_hash", *opt.bundle / "manifest.txt");
    if (h != cfg.hash())
      throw std::runtime_error("bundle " + opt.bundle->string() + " was trained with config hash " + h +
                               ", current config hashes to " + cfg.hash());
    dfa_model = cascade::load_bundle(*opt.bundle);
  }

  const fs::path dir = g.out.value_or("comparison");
  prepare_output(dir, g.force);

  if (!opt.bundle) dfa_model = cascade::train_cascade(splits.train, splits.val, cfg.cascade()).model;
  const auto patch = baselines::train_patch_cascade(splits.train, splits.val, cfg.patch());

  std::vector<baselines::ModelEntry> models(3);
  models[0].name = "DFA";
  models[0].trained_networks = cascade::CascadeModel::trained_network_count();
  for (const auto& p : cascade::predict(dfa_model, splits.test)) models[0].predictions.push_back(p.stage3);
  const auto pp = baselines::predict_patch_cascade(patch, splits.test);
  // The patch cascade's first stage is the direct regressor (visibility, no pseudo-labels).
  models[1].name = "patch-cascade";
  models[1].trained_networks = patch.trained_network_count();
  models[2].name = "direct";
  models[2].trained_networks = 1;
  std::size_t empty = 0;
  for (const auto& p : pp) {
    models[1].predictions.push_back(p.stages[2]);
    models[2].predictions.push_back(p.stages[0]);
    empty += p.empty_crops;
  }

  const auto cmp = baselines::compare(models, splits.test, cfg.pdl_threshold, cfg.pdl_max, cfg.pdl_steps);
  baselines::write_comparison(dir, cmp, models, splits.test);
  cascade::write_manifest(dir / "manifest.txt", {{"config_hash", cfg.hash()},
                                                 {"data_hash", cfg.data_hash()},
                                                 {"dataset", data.string()},
                                                 {"empty_crops", std::to_string(empty)}});

  const auto gts = cascade::ground_truth(splits.test);
  out << "compared " << models.size() << " models on " << splits.test.size() << " test samples; report in "
      << dir.string() << "\n";
  for (const auto& m : models)
    out << "  " << pad(m.name, 15) << pad(std::to_string(m.trained_networks) + " nets", 9) << "mean NE "
        << report::fmt(cascade::mean_ne(m.predictions, gts)) << "\n";
  if (empty) out << "  " << empty << " patch crops fell outside their image and were zero-filled\n";
  return dir;
}

}  // namespace dfa::cli
