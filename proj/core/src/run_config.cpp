#include "dfa/run_config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

#include "dfa/rng.hpp"

namespace dfa::harness {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double d = 0;
  try {
    d = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw std::invalid_argument(key + ": expected a number, got '" + v + "'");
  return d;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos)
    throw std::invalid_argument(key + ": expected a non-negative integer, got '" + v + "'");
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    throw std::invalid_argument(key + ": integer out of range: '" + v + "'");
  }
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

template <typename T>
std::string join(const T& xs, const std::function<std::string(typename T::value_type)>& f) {
  std::string out;
  for (const auto& x : xs) out += (out.empty() ? "" : ",") + f(x);
  return out;
}

struct Field {
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
};

Field size_field(std::size_t RunConfig::*m) {
  return {[m](const RunConfig& c) { return std::to_string(c.*m); },
          [m](RunConfig& c, const std::string& k, const std::string& v) { c.*m = to_u64(k, v); }};
}

Field double_field(double RunConfig::*m) {
  return {[m](const RunConfig& c) { return num(c.*m); },
          [m](RunConfig& c, const std::string& k, const std::string& v) { c.*m = to_double(k, v); }};
}

Field string_field(std::string RunConfig::*m) {
  return {[m](const RunConfig& c) { return c.*m; },
          [m](RunConfig& c, const std::string&, const std::string& v) { c.*m = v; }};
}

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> f = [] {
    std::vector<std::pair<std::string, Field>> v;
    v.emplace_back("data.train", size_field(&RunConfig::train_count));
    v.emplace_back("data.val", size_field(&RunConfig::val_count));
    v.emplace_back("data.test", size_field(&RunConfig::test_count));
    v.emplace_back("data.image_size", size_field(&RunConfig::image_size));
    v.emplace_back("data.subset_mix",
                   Field{[](const RunConfig& c) { return join(c.subset_mix, std::function<std::string(double)>(num)); },
                         [](RunConfig& c, const std::string& k, const std::string& s) {
                           const auto parts = split_list(s);
                           if (parts.size() != 5) throw std::invalid_argument(k + ": expected 5 comma-separated weights");
                           for (std::size_t i = 0; i < 5; ++i) c.subset_mix[i] = to_double(k, parts[i]);
                         }});
    v.emplace_back("data.invisible_fraction", double_field(&RunConfig::invisible_fraction));
    v.emplace_back("data.deformation", double_field(&RunConfig::deformation));
    v.emplace_back("data.jitter", double_field(&RunConfig::jitter));
    v.emplace_back("data.background_noise", double_field(&RunConfig::background_noise));
    v.emplace_back("net.conv_channels",
                   Field{[](const RunConfig& c) {
                           return join(c.conv_channels,
                                       std::function<std::string(std::size_t)>([](std::size_t x) { return std::to_string(x); }));
                         },
                         [](RunConfig& c, const std::string& k, const std::string& s) {
                           c.conv_channels.clear();
                           for (const auto& p : split_list(s)) c.conv_channels.push_back(to_u64(k, p));
                         }});
    v.emplace_back("net.kernel", size_field(&RunConfig::kernel));
    v.emplace_back("net.pool", size_field(&RunConfig::pool));
    v.emplace_back("net.dense", size_field(&RunConfig::dense_width));
    for (std::size_t s = 0; s < 3; ++s)
      v.emplace_back("stage" + std::to_string(s + 1) + ".iterations",
                     Field{[s](const RunConfig& c) { return std::to_string(c.iterations[s]); },
                           [s](RunConfig& c, const std::string& k, const std::string& x) { c.iterations[s] = to_u64(k, x); }});
    v.emplace_back("train.batch_size", size_field(&RunConfig::batch_size));
    v.emplace_back("train.learning_rate", double_field(&RunConfig::learning_rate));
    v.emplace_back("train.momentum", double_field(&RunConfig::momentum));
    v.emplace_back("train.log_every", size_field(&RunConfig::log_every));
    v.emplace_back("train.eval_every", size_field(&RunConfig::eval_every));
    v.emplace_back("labels.K", size_field(&RunConfig::clusters));
    v.emplace_back("labels.T", double_field(&RunConfig::temperature));
    v.emplace_back("labels.scale", double_field(&RunConfig::label_scale));
    v.emplace_back("routing.epsilon", double_field(&RunConfig::epsilon));
    v.emplace_back("schedule.t1", double_field(&RunConfig::t1));
    v.emplace_back("schedule.t2", double_field(&RunConfig::t2));
    v.emplace_back("schedule.alpha", double_field(&RunConfig::alpha));
    v.emplace_back("schedule.beta", double_field(&RunConfig::beta));
    v.emplace_back("schedule.mode",
                   Field{[](const RunConfig& c) {
                           return std::string(c.schedule_mode == cascade::ScheduleMode::AsWritten ? "as-written" : "decay");
                         },
                         [](RunConfig& c, const std::string& k, const std::string& s) {
                           if (s == "as-written") c.schedule_mode = cascade::ScheduleMode::AsWritten;
                           else if (s == "decay") c.schedule_mode = cascade::ScheduleMode::Decay;
                           else throw std::invalid_argument(k + ": expected 'as-written' or 'decay', got '" + s + "'");
                         }});
    v.emplace_back("stage3.mode",
                   Field{[](const RunConfig& c) {
                           return std::string(c.stage3_mode == cascade::Stage3Mode::AutoRouting ? "auto-routing"
                                                                                                 : "two-branch-average");
                         },
                         [](RunConfig& c, const std::string& k, const std::string& s) {
                           if (s == "auto-routing") c.stage3_mode = cascade::Stage3Mode::AutoRouting;
                           else if (s == "two-branch-average") c.stage3_mode = cascade::Stage3Mode::TwoBranchAverage;
                           else throw std::invalid_argument(k + ": expected 'auto-routing' or 'two-branch-average'");
                         }});
    v.emplace_back("patch.size", size_field(&RunConfig::patch_size));
    v.emplace_back("patch.iterations", size_field(&RunConfig::patch_iterations));
    v.emplace_back("eval.pdl_threshold", double_field(&RunConfig::pdl_threshold));
    v.emplace_back("eval.pdl_max", double_field(&RunConfig::pdl_max));
    v.emplace_back("eval.pdl_steps", size_field(&RunConfig::pdl_steps));
    v.emplace_back("seed", Field{[](const RunConfig& c) { return std::to_string(c.seed); },
                                 [](RunConfig& c, const std::string& k, const std::string& s) { c.seed = to_u64(k, s); }});
    v.emplace_back("paths.dataset", string_field(&RunConfig::dataset_path));
    v.emplace_back("paths.bundle", string_field(&RunConfig::bundle_path));
    return v;
  }();
  return f;
}

const Field* find_field(const std::string& key) {
  for (const auto& [k, f] : fields())
    if (k == key) return &f;
  return nullptr;
}

}  // namespace

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> k = [] {
    std::vector<std::string> out;
    for (const auto& [name, f] : fields()) out.push_back(name);
    return out;
  }();
  return k;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const Field* f = find_field(key);
  if (!f) throw std::invalid_argument("unknown config key '" + key + "'");
  f->set(*this, key, value);
}

std::string RunConfig::serialize() const {
  std::string out;
  for (const auto& [k, f] : fields()) out += k + " = " + f.get(*this) + "\n";
  return out;
}

RunConfig RunConfig::parse(const std::string& text, const std::string& origin) {
  RunConfig c;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  std::map<std::string, std::size_t> seen;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto where = origin + ":" + std::to_string(lineno) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument(where + "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    if (auto [it, fresh] = seen.emplace(key, lineno); !fresh)
      throw std::invalid_argument(where + "duplicate key '" + key + "' (first set on line " +
                                  std::to_string(it->second) + ")");
    try {
      c.set(key, trim(line.substr(eq + 1)));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(where + e.what());
    }
  }
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read config file " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse(ss.str(), path.string());
}

void RunConfig::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write config file " + path.string());
  os << serialize();
}

namespace {

template <class Keep>
std::string hash_fields(const RunConfig& c, Keep keep) {
  std::string text;
  for (const auto& [k, f] : fields())
    if (keep(k)) text += k + " = " + f.get(c) + "\n";
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(text)));
  return buf;
}

}  // namespace

std::string RunConfig::hash() const {
  return hash_fields(*this, [](const std::string& k) { return k.rfind("paths.", 0) != 0; });
}

std::string RunConfig::data_hash() const {
  return hash_fields(*this, [](const std::string& k) { return k.rfind("data.", 0) == 0 || k == "seed"; });
}

void RunConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("config: " + m); };
  if (train_count == 0 || val_count == 0 || test_count == 0) fail("data.train, data.val and data.test must be >= 1");
  if (image_size < 32) fail("data.image_size must be >= 32");
  double mix = 0;
  for (double m : subset_mix) {
    if (!(m >= 0.0)) fail("data.subset_mix weights must be >= 0");
    mix += m;
  }
  if (!(mix > 0.0)) fail("data.subset_mix must have a positive weight");
  if (!(invisible_fraction >= 0.0 && invisible_fraction <= 1.0)) fail("data.invisible_fraction must be in [0, 1]");
  if (!(deformation >= 0.0) || !(jitter >= 0.0) || !(background_noise >= 0.0))
    fail("data.deformation, data.jitter and data.background_noise must be >= 0");
  if (conv_channels.empty()) fail("net.conv_channels must list at least one layer");
  for (std::size_t i = 0; i < 3; ++i)
    if (iterations[i] == 0) fail("stage" + std::to_string(i + 1) + ".iterations must be >= 1");
  if (batch_size == 0) fail("train.batch_size must be >= 1");
  if (!(learning_rate > 0.0)) fail("train.learning_rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) fail("train.momentum must be in [0, 1)");
  if (clusters == 0) fail("labels.K must be >= 1");
  if (!(temperature > 0.0)) fail("labels.T must be > 0");
  if (!(label_scale > 0.0)) fail("labels.scale must be > 0");
  if (!(epsilon >= 0.0)) fail("routing.epsilon must be >= 0");
  if (!(t1 > 0.0 && t2 > t1)) fail("schedule needs 0 < t1 < t2");
  if (!(alpha >= 0.0) || !(beta >= 0.0)) fail("schedule.alpha and schedule.beta must be >= 0");
  if (patch_size == 0 || patch_size > image_size) fail("patch.size must be in [1, data.image_size]");
  if (patch_iterations == 0) fail("patch.iterations must be >= 1");
  if (!(pdl_threshold > 0.0) || !(pdl_max > 0.0) || pdl_steps == 0) fail("eval thresholds must be positive");
  cascade().arch.validate();
}

synth::GeneratorConfig RunConfig::generator() const {
  synth::GeneratorConfig g;
  g.count = train_count + val_count + test_count;
  g.image_size = image_size;
  g.subset_mix = subset_mix;
  g.invisible_fraction = invisible_fraction;
  g.deformation = deformation;
  g.jitter = jitter;
  g.background_noise = background_noise;
  return g;
}

std::array<double, 3> RunConfig::split_fractions() const {
  const double n = static_cast<double>(train_count + val_count + test_count);
  const double a = static_cast<double>(train_count) / n, b = static_cast<double>(val_count) / n;
  return {a, b, 1.0 - a - b};
}

cascade::CascadeConfig RunConfig::cascade() const {
  cascade::CascadeConfig c;
  c.arch.image_height = c.arch.image_width = image_size;
  c.arch.conv_channels = conv_channels;
  c.arch.kernel = kernel;
  c.arch.pool = pool;
  c.arch.dense_width = dense_width;
  c.arch.landmarks = synth::kLandmarkCount;
  c.arch.clusters = clusters;
  c.clusters = clusters;
  c.temperature = temperature;
  c.label_scale = label_scale;
  c.epsilon = epsilon;
  c.stage3_mode = stage3_mode;
  c.seed = derive_seed(seed, "cascade");
  cascade::TrainConfig* stages[] = {&c.stage1, &c.stage2, &c.stage3};
  for (std::size_t i = 0; i < 3; ++i) {
    cascade::TrainConfig& t = *stages[i];
    t.iterations = iterations[i];
    t.batch_size = batch_size;
    t.learning_rate = learning_rate;
    t.momentum = momentum;
    t.log_every = log_every;
    t.eval_every = eval_every;
    t.schedule = {alpha, beta, t1, t2, schedule_mode};
  }
  return c;
}

baselines::DirectConfig RunConfig::direct() const {
  const cascade::CascadeConfig c = cascade();
  baselines::DirectConfig d;
  d.arch = c.arch;
  d.train = c.stage1;
  d.clusters = c.clusters;
  d.temperature = c.temperature;
  d.label_scale = c.label_scale;
  // Same seed as the cascade: stage 1 and every direct arm share their init.
  d.seed = c.seed;
  return d;
}

baselines::PatchConfig RunConfig::patch() const {
  baselines::PatchConfig p;
  p.stage1 = direct();
  p.patch_train = p.stage1.train;
  p.patch_train.iterations = patch_iterations;
  // The schedule only weights auxiliary terms, which patch nets do not use.
  p.patch_train.schedule.t1 = 1.0;
  p.patch_train.schedule.t2 = 2.0;
  p.patch_size = patch_size;
  return p;
}

}  // namespace dfa::harness
