#include "dfa/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

#include "dfa/rng.hpp"

namespace dfa::synth {

namespace {

using geom::Point;
using geom::Visibility;

// 7x7 glyphs for the left member of each landmark pair; the right member is
// the horizontal mirror image.
constexpr std::array<std::string_view, 4> kGlyphs{
    "#######"
    "#......"
    "#......"
    "#......"
    "#......"
    "#......"
    "#......",

    "#......"
    ".#....."
    "..#...."
    "...#..."
    "....#.."
    ".....#."
    "###...#",

    "######."
    "#......"
    "#......"
    "#####.."
    "#......"
    "#......"
    "######.",

    "#......"
    "##....."
    "###...."
    "####..."
    "#####.."
    "######."
    "#######",
};

// Outline connecting the landmarks (indices into kLandmarkNames); the
// collar-to-collar neckline is drawn separately.
constexpr std::array<std::pair<int, int>, 7> kOutline{{{0, 2}, {2, 4}, {4, 6}, {6, 7}, {7, 5}, {5, 3}, {3, 1}}};

double uniform(std::mt19937_64& gen, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(gen);
}

template <std::size_t N>
std::size_t categorical(std::mt19937_64& gen, const std::array<double, N>& weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  double r = uniform(gen, 0.0, total);
  for (std::size_t i = 0; i < N; ++i) {
    if (r < weights[i]) return i;
    r -= weights[i];
  }
  for (std::size_t i = N; i-- > 0;)
    if (weights[i] > 0.0) return i;
  return 0;
}

bool in_frame(const Point& p, double side) { return p.x >= 0.0 && p.x < side && p.y >= 0.0 && p.y < side; }

double segment_distance(double px, double py, const Point& a, const Point& b) {
  const double vx = b.x - a.x, vy = b.y - a.y;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0.0 ? ((px - a.x) * vx + (py - a.y) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(px - (a.x + t * vx), py - (a.y + t * vy));
}

void draw_segment(std::vector<double>& img, std::size_t size, const Point& a, const Point& b, double intensity) {
  const double s = static_cast<double>(size);
  const double x0 = std::max(0.0, std::floor(std::min(a.x, b.x) - 2.0));
  const double x1 = std::min(s - 1.0, std::ceil(std::max(a.x, b.x) + 2.0));
  const double y0 = std::max(0.0, std::floor(std::min(a.y, b.y) - 2.0));
  const double y1 = std::min(s - 1.0, std::ceil(std::max(a.y, b.y) + 2.0));
  if (x0 > x1 || y0 > y1) return;
  for (auto y = static_cast<std::size_t>(y0); y <= static_cast<std::size_t>(y1); ++y)
    for (auto x = static_cast<std::size_t>(x0); x <= static_cast<std::size_t>(x1); ++x) {
      const double d = segment_distance(static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5, a, b);
      const double v = intensity * std::max(0.0, 1.0 - d);
      double& px = img[y * size + x];
      px = std::max(px, v);
    }
}

template <typename Fn>
void for_pixels_near(std::size_t size, const Point& c, double radius, Fn&& fn) {
  const double s = static_cast<double>(size);
  const double x0 = std::max(0.0, std::floor(c.x - radius)), x1 = std::min(s - 1.0, std::ceil(c.x + radius));
  const double y0 = std::max(0.0, std::floor(c.y - radius)), y1 = std::min(s - 1.0, std::ceil(c.y + radius));
  if (x0 > x1 || y0 > y1) return;
  for (auto y = static_cast<std::size_t>(y0); y <= static_cast<std::size_t>(y1); ++y)
    for (auto x = static_cast<std::size_t>(x0); x <= static_cast<std::size_t>(x1); ++x)
      fn(x, y, static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5);
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

std::string_view garment_name(Garment g) {
  switch (g) {
    case Garment::UpperBody: return "upper-body";
    case Garment::LowerBody: return "lower-body";
    case Garment::FullBody: return "full-body";
  }
  return "unknown";
}

Garment parse_garment(std::string_view name) {
  if (name == "upper-body") return Garment::UpperBody;
  if (name == "lower-body") return Garment::LowerBody;
  if (name == "full-body") return Garment::FullBody;
  throw std::invalid_argument("unknown garment '" + std::string(name) + "'");
}

const GarmentTemplate& garment_template(Garment g) {
  static const std::array<GarmentTemplate, 3> templates{{
      {Garment::UpperBody,
       {{{0.40, 0.12}, {0.60, 0.12}, {0.08, 0.38}, {0.92, 0.38}, {0.28, 0.60}, {0.72, 0.60}, {0.27, 0.88}, {0.73, 0.88}}}},
      {Garment::LowerBody,
       {{{0.30, 0.08}, {0.70, 0.08}, {0.22, 0.30}, {0.78, 0.30}, {0.47, 0.42}, {0.53, 0.42}, {0.25, 0.92}, {0.75, 0.92}}}},
      {Garment::FullBody,
       {{{0.42, 0.05}, {0.58, 0.05}, {0.18, 0.24}, {0.82, 0.24}, {0.34, 0.45}, {0.66, 0.45}, {0.15, 0.95}, {0.85, 0.95}}}},
  }};
  return templates.at(static_cast<std::size_t>(g));
}

void GeneratorConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("generator config: " + what); };
  if (count == 0) fail("count must be at least 1");
  if (image_size < 32) fail("image size must be at least 32");
  if (landmarks != kLandmarkCount) fail("garment templates define exactly 8 landmarks");
  if (large_zoom_max_truncated > landmarks || medium_zoom_max_truncated > landmarks)
    fail("requested more truncated landmarks than the " + std::to_string(landmarks) + " available");
  if (medium_zoom_min_truncated < 2 || medium_zoom_max_truncated > 3 ||
      medium_zoom_min_truncated > medium_zoom_max_truncated)
    fail("medium zoom-in needs 2..3 truncated landmarks");
  if (large_zoom_min_truncated < 4 || large_zoom_min_truncated > large_zoom_max_truncated)
    fail("large zoom-in needs at least 4 truncated landmarks");
  if (large_zoom_max_truncated >= landmarks) fail("large zoom-in must leave at least one landmark in frame");
  double total = 0.0;
  for (double w : subset_mix) {
    if (w < 0.0) fail("subset mix weights must be nonnegative");
    total += w;
  }
  if (!(total > 0.0)) fail("subset mix must have positive mass");
  total = 0.0;
  for (double w : garment_mix) {
    if (w < 0.0) fail("garment mix weights must be nonnegative");
    total += w;
  }
  if (!(total > 0.0)) fail("garment mix must have positive mass");
  if (invisible_fraction < 0.0 || invisible_fraction > 1.0) fail("invisible fraction must be in [0, 1]");
  if (garment_scale.lo <= 0.0 || garment_scale.lo > garment_scale.hi) fail("bad garment scale range");
  for (const Range& r : {normal_zoom, medium_zoom, large_zoom})
    if (r.lo <= 0.0 || r.lo > r.hi) fail("bad zoom range");
}

SyntheticSample generate_sample(const GeneratorConfig& config, std::uint64_t seed, std::size_t index) {
  const std::uint64_t sample_seed = derive_seed(seed, "sample", index);
  std::mt19937_64 gen(sample_seed);
  const double side = static_cast<double>(config.image_size);

  const auto intended = static_cast<geom::Subset>(categorical(gen, config.subset_mix));
  const auto garment = static_cast<Garment>(categorical(gen, config.garment_mix));
  const bool zoomed = intended == geom::Subset::MediumZoom || intended == geom::Subset::LargeZoom;
  geom::PoseClass pose = geom::PoseClass::Front;
  if (intended == geom::Subset::MediumPose) pose = geom::PoseClass::Side;
  if (intended == geom::Subset::LargePose) pose = geom::PoseClass::Back;
  if (zoomed) pose = static_cast<geom::PoseClass>(categorical(gen, std::array<double, 3>{0.5, 0.3, 0.2}));

  std::size_t min_cut = 0, max_cut = 0;
  if (intended == geom::Subset::MediumZoom) {
    min_cut = config.medium_zoom_min_truncated;
    max_cut = config.medium_zoom_max_truncated;
  } else if (intended == geom::Subset::LargeZoom) {
    min_cut = config.large_zoom_min_truncated;
    max_cut = config.large_zoom_max_truncated;
  }

  const GarmentTemplate& tmpl = garment_template(garment);
  std::normal_distribution<double> normal(0.0, 1.0);
  constexpr int kMaxAttempts = 2000;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    std::array<Point, kLandmarkCount> u{};
    for (std::size_t i = 0; i < kLandmarkCount; ++i) u[i] = {tmpl.anchors[i].x - 0.5, tmpl.anchors[i].y - 0.5};

    if (pose == geom::PoseClass::Side) {
      const double squeeze = uniform(gen, 0.55, 0.75);
      const double shear = uniform(gen, -0.25, 0.25);
      for (auto& p : u) p = {p.x * squeeze + shear * p.y, p.y};
    } else if (pose == geom::PoseClass::Back) {
      for (auto& p : u) p.x = -p.x;
    }
    const double angle = uniform(gen, -config.max_rotation_deg, config.max_rotation_deg) * std::numbers::pi / 180.0;
    const double ca = std::cos(angle), sa = std::sin(angle);
    for (auto& p : u) p = {ca * p.x - sa * p.y, sa * p.x + ca * p.y};

    // Low-frequency warp: two random plane waves.
    for (int wave = 0; wave < 2; ++wave) {
      const double ax = uniform(gen, -config.deformation, config.deformation);
      const double ay = uniform(gen, -config.deformation, config.deformation);
      const double kdir = uniform(gen, 0.0, 2.0 * std::numbers::pi), kmag = uniform(gen, 2.0, 4.0);
      const double kx = kmag * std::cos(kdir), ky = kmag * std::sin(kdir);
      const double phase = uniform(gen, 0.0, 2.0 * std::numbers::pi);
      for (auto& p : u) {
        const double arg = kx * p.x + ky * p.y + phase;
        p = {p.x + ax * std::sin(arg), p.y + ay * std::cos(arg)};
      }
    }
    for (auto& p : u) p = {p.x + config.jitter * normal(gen), p.y + config.jitter * normal(gen)};

    const double scale = side * uniform(gen, config.garment_scale.lo, config.garment_scale.hi);
    const Range zr = intended == geom::Subset::LargeZoom    ? config.large_zoom
                     : intended == geom::Subset::MediumZoom ? config.medium_zoom
                                                            : config.normal_zoom;
    const double zoom = uniform(gen, zr.lo, zr.hi);
    double tx = uniform(gen, -0.04, 0.04) * side, ty = uniform(gen, -0.04, 0.04) * side;
    if (zoomed) {
      tx = uniform(gen, -config.zoom_shift, config.zoom_shift) * side;
      ty = uniform(gen, -config.zoom_shift, config.zoom_shift) * side;
    }

    geom::LandmarkSet pixels;
    pixels.coords.resize(kLandmarkCount);
    pixels.visibility.assign(kLandmarkCount, Visibility::Visible);
    std::size_t cut = 0;
    for (std::size_t i = 0; i < kLandmarkCount; ++i) {
      pixels.coords[i] = {side / 2 + tx + scale * zoom * u[i].x, side / 2 + ty + scale * zoom * u[i].y};
      if (!in_frame(pixels.coords[i], side)) {
        pixels.visibility[i] = Visibility::Truncated;
        ++cut;
      }
    }
    if (cut < min_cut || cut > max_cut) continue;
    for (std::size_t i = 0; i < kLandmarkCount; ++i)
      if (pixels.visibility[i] == Visibility::Visible && uniform(gen, 0.0, 1.0) < config.invisible_fraction)
        pixels.visibility[i] = Visibility::Invisible;

    SyntheticSample s;
    s.id = index;
    s.box = {side / 2, side / 2, side, side};
    s.meta = {pose, zoom, garment, sample_seed};
    RenderStyle style;
    style.garment = garment;
    style.back_view = pose == geom::PoseClass::Back;
    style.glyph_scale = zoom * scale / (0.67 * side);
    style.background_noise = config.background_noise;
    style.noise_seed = derive_seed(sample_seed, "noise");
    s.image = render_image(pixels, style, config.image_size);
    s.gt.coords = geom::normalize_landmarks(pixels.coords, s.box);
    s.gt.visibility = pixels.visibility;
    s.pixels = std::move(pixels);
    return s;
  }
  throw std::runtime_error("generator: could not realize subset " + std::string(geom::subset_name(intended)) +
                           " for sample " + std::to_string(index));
}

std::vector<SyntheticSample> generate_dataset(const GeneratorConfig& config, std::uint64_t seed) {
  config.validate();
  std::vector<SyntheticSample> out;
  out.reserve(config.count);
  for (std::size_t i = 0; i < config.count; ++i) out.push_back(generate_sample(config, seed, i));
  return out;
}

Tensor render_image(const geom::LandmarkSet& pixels, const RenderStyle& style, std::size_t size) {
  if (size < 32) throw std::invalid_argument("render_image: size must be at least 32");
  std::vector<double> img(size * size, 0.0);
  if (style.background_noise > 0.0) {
    std::mt19937_64 gen(style.noise_seed);
    std::uniform_real_distribution<double> dist(0.0, style.background_noise);
    for (double& v : img) v = dist(gen);
  }

  const std::size_t n = pixels.size();
  if (n == kLandmarkCount) {
    for (auto [a, b] : kOutline)
      draw_segment(img, size, pixels.coords[a], pixels.coords[b], style.stroke_intensity);
    const Point& lc = pixels.coords[0];
    const Point& rc = pixels.coords[1];
    if (style.back_view) {
      draw_segment(img, size, lc, rc, style.stroke_intensity);
    } else {
      const double drop = 0.45 * std::hypot(rc.x - lc.x, rc.y - lc.y);
      const Point dip{(lc.x + rc.x) / 2, (lc.y + rc.y) / 2 + drop};
      draw_segment(img, size, lc, dip, style.stroke_intensity);
      draw_segment(img, size, dip, rc, style.stroke_intensity);
    }
  }

  const double scale = style.glyph_scale;
  for (std::size_t i = 0; i < n; ++i) {
    if (pixels.visibility[i] != Visibility::Visible) continue;
    const Point c = pixels.coords[i];
    const std::string_view glyph = kGlyphs[(i / 2) % kGlyphs.size()];
    const bool mirrored = i % 2 == 1;
    const double sigma = scale;
    for_pixels_near(size, c, 4.0 * scale + 1.0, [&](std::size_t x, std::size_t y, double px, double py) {
      double u = (px - c.x) / scale;
      const double v = (py - c.y) / scale;
      if (mirrored) u = -u;
      const double col = std::floor(u + 3.5), row = std::floor(v + 3.5);
      double value = 0.0;
      if (col >= 0 && col < 7 && row >= 0 && row < 7 &&
          glyph[static_cast<std::size_t>(row) * 7 + static_cast<std::size_t>(col)] == '#')
        value = style.glyph_intensity;
      const double d2 = (px - c.x) * (px - c.x) + (py - c.y) * (py - c.y);
      value = std::max(value, std::exp(-d2 / (2.0 * sigma * sigma)));
      double& dst = img[y * size + x];
      dst = std::max(dst, value);
    });
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (pixels.visibility[i] != Visibility::Invisible) continue;
    const Point c = pixels.coords[i];
    const double half = 3.5 * scale;
    for_pixels_near(size, c, half, [&](std::size_t x, std::size_t y, double px, double py) {
      if (std::abs(px - c.x) <= half && std::abs(py - c.y) <= half) img[y * size + x] = 0.3;
    });
  }

  Tensor out({1, size, size});
  for (std::size_t i = 0; i < img.size(); ++i) out[i] = std::round(std::clamp(img[i], 0.0, 1.0) * 255.0) / 255.0;
  return out;
}

void write_pgm(const std::filesystem::path& path, const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 1) throw std::invalid_argument("write_pgm: expected [1,H,W] image");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "P5\n" << image.dim(2) << " " << image.dim(1) << "\n255\n";
  std::string bytes(image.size(), '\0');
  for (std::size_t i = 0; i < image.size(); ++i)
    bytes[i] = static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(image[i], 0.0, 1.0) * 255.0)));
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

Tensor read_pgm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::string magic;
  std::size_t width = 0, height = 0, maxval = 0;
  is >> magic >> width >> height >> maxval;
  if (magic != "P5" || width == 0 || height == 0 || maxval != 255)
    throw std::runtime_error(path.string() + ": not an 8-bit binary PGM");
  is.get();
  std::string bytes(width * height, '\0');
  is.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(is.gcount()) != bytes.size()) throw std::runtime_error(path.string() + ": truncated");
  Tensor out({1, height, width});
  for (std::size_t i = 0; i < bytes.size(); ++i) out[i] = static_cast<unsigned char>(bytes[i]) / 255.0;
  return out;
}

void save_dataset(const std::filesystem::path& dir, const std::vector<SyntheticSample>& samples) {
  std::filesystem::create_directories(dir / "images");
  std::ofstream csv(dir / "annotations.csv", std::ios::trunc);
  if (!csv) throw std::runtime_error("cannot write " + (dir / "annotations.csv").string());
  csv << "sample_id,image,bbox_xc,bbox_yc,bbox_w,bbox_h";
  for (std::size_t i = 0; i < kLandmarkCount; ++i) csv << ",x" << i << ",y" << i << ",v" << i;
  csv << ",pose,zoom,garment,seed\n";
  for (const auto& s : samples) {
    char name[32];
    std::snprintf(name, sizeof name, "%06zu.pgm", s.id);
    write_pgm(dir / "images" / name, s.image);
    csv << s.id << ",images/" << name << "," << format_double(s.box.xc) << "," << format_double(s.box.yc) << ","
        << format_double(s.box.w) << "," << format_double(s.box.h);
    for (std::size_t i = 0; i < s.pixels.size(); ++i)
      csv << "," << format_double(s.pixels.coords[i].x) << "," << format_double(s.pixels.coords[i].y) << ","
          << static_cast<int>(s.pixels.visibility[i]);
    csv << "," << geom::pose_name(s.meta.pose) << "," << format_double(s.meta.zoom) << ","
        << garment_name(s.meta.garment) << "," << s.meta.seed << "\n";
  }
  if (!csv) throw std::runtime_error("write failed: " + (dir / "annotations.csv").string());
}

std::vector<SyntheticSample> load_dataset(const std::filesystem::path& dir) {
  const auto csv_path = dir / "annotations.csv";
  std::ifstream csv(csv_path);
  if (!csv) throw std::runtime_error("dataset not found: " + csv_path.string());
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& what) {
    throw std::runtime_error(csv_path.string() + ":" + std::to_string(line_no) + ": " + what);
  };
  auto number = [&](const std::string& field) {
    char* end = nullptr;
    const double v = std::strtod(field.c_str(), &end);
    if (field.empty() || *end != '\0' || !std::isfinite(v)) fail("bad number '" + field + "'");
    return v;
  };
  auto integer = [&](const std::string& field) {
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(field, &pos);
    } catch (const std::exception&) {
      fail("bad integer '" + field + "'");
    }
    if (pos != field.size()) fail("bad integer '" + field + "'");
    return static_cast<std::uint64_t>(v);
  };

  constexpr std::size_t kColumns = 6 + 3 * kLandmarkCount + 4;
  std::vector<SyntheticSample> out;
  while (std::getline(csv, line)) {
    ++line_no;
    if (line_no == 1) {
      if (!line.starts_with("sample_id,image,")) fail("missing header row");
      continue;
    }
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != kColumns) fail("expected " + std::to_string(kColumns) + " fields, got " + std::to_string(f.size()));
    SyntheticSample s;
    s.id = integer(f[0]);
    s.box = {number(f[2]), number(f[3]), number(f[4]), number(f[5])};
    try {
      s.box.validate();
    } catch (const std::exception& e) {
      fail(e.what());
    }
    s.pixels.coords.resize(kLandmarkCount);
    s.pixels.visibility.resize(kLandmarkCount);
    for (std::size_t i = 0; i < kLandmarkCount; ++i) {
      s.pixels.coords[i] = {number(f[6 + 3 * i]), number(f[7 + 3 * i])};
      const std::string& v = f[8 + 3 * i];
      if (v != "0" && v != "1" && v != "2") fail("visibility token '" + v + "' not in {0,1,2}");
      s.pixels.visibility[i] = static_cast<Visibility>(v[0] - '0');
    }
    try {
      s.meta.pose = geom::parse_pose(f[6 + 3 * kLandmarkCount]);
      s.meta.garment = parse_garment(f[8 + 3 * kLandmarkCount]);
    } catch (const std::exception& e) {
      fail(e.what());
    }
    s.meta.zoom = number(f[7 + 3 * kLandmarkCount]);
    s.meta.seed = integer(f[9 + 3 * kLandmarkCount]);
    try {
      s.image = read_pgm(dir / f[1]);
    } catch (const std::exception& e) {
      fail(e.what());
    }
    const double width = static_cast<double>(s.image.dim(2)), height = static_cast<double>(s.image.dim(1));
    for (std::size_t i = 0; i < kLandmarkCount; ++i) {
      const auto& p = s.pixels.coords[i];
      const bool inside = p.x >= 0.0 && p.x < width && p.y >= 0.0 && p.y < height;
      if (s.pixels.visibility[i] == Visibility::Truncated && inside)
        fail("landmark " + std::to_string(i) + " marked truncated but lies inside the image");
      if (s.pixels.visibility[i] != Visibility::Truncated && !inside)
        fail("landmark " + std::to_string(i) + " lies outside the image but is not marked truncated");
    }
    s.gt.coords = geom::normalize_landmarks(s.pixels.coords, s.box);
    s.gt.visibility = s.pixels.visibility;
    out.push_back(std::move(s));
  }
  if (line_no == 0) fail("empty annotation file");
  return out;
}

Splits split(const std::vector<SyntheticSample>& dataset, std::array<double, 3> fractions, std::uint64_t seed) {
  double total = 0.0;
  for (double f : fractions) {
    if (f < 0.0) throw std::invalid_argument("split: fractions must be nonnegative");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("split: fractions must sum to 1");
  const std::size_t n = dataset.size();
  const auto n_train = static_cast<std::size_t>(std::llround(fractions[0] * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::llround(fractions[1] * static_cast<double>(n)));
  if (n_train == 0 || n_val == 0 || n_train + n_val >= n)
    throw std::invalid_argument("split: a split of " + std::to_string(n) + " samples would be empty");

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 gen(derive_seed(seed, "split"));
  std::shuffle(order.begin(), order.end(), gen);
  std::sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::sort(order.begin() + static_cast<std::ptrdiff_t>(n_train),
            order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  std::sort(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
  Splits s;
  for (std::size_t i = 0; i < n; ++i) {
    auto& dst = i < n_train ? s.train : (i < n_train + n_val ? s.val : s.test);
    dst.push_back(dataset[order[i]]);
  }
  return s;
}

}  // namespace dfa::synth
