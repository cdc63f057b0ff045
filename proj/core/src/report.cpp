#include "dfa/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dfa::report {

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::string threshold_label(double t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", t);
  return buf;
}

}  // namespace

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

std::vector<MetricRow> metric_rows(std::span<const geom::LandmarkSet> preds, std::span<const geom::LandmarkSet> gts,
                                   std::span<const geom::Subset> subsets, std::span<const std::string_view> names,
                                   double threshold_px, double image_side) {
  if (preds.size() != gts.size() || subsets.size() != gts.size())
    throw std::invalid_argument("metrics: prediction, ground-truth and subset counts differ");
  const std::size_t n = gts.empty() ? names.size() : gts.front().size();
  if (names.size() != n)
    throw std::invalid_argument("metrics: " + std::to_string(names.size()) + " landmark names for " +
                                std::to_string(n) + " landmarks");
  auto pdl_or_empty = [&](std::span<const geom::LandmarkSet> p, std::span<const geom::LandmarkSet> g) {
    std::optional<double> v;
    for (const auto& s : g)
      if (s.truncated_count() < s.size()) {
        v = geom::pdl(p, g, threshold_px, image_side);
        break;
      }
    return v;
  };

  std::vector<MetricRow> rows;
  const geom::NormalizedError all = geom::dataset_normalized_error(preds, gts);
  for (std::size_t i = 0; i < n; ++i) {
    // Single-landmark views for the per-landmark PDL.
    std::vector<geom::LandmarkSet> p1, g1;
    for (std::size_t s = 0; s < gts.size(); ++s) {
      if (gts[s].visibility[i] == geom::Visibility::Truncated) continue;
      p1.push_back({{preds[s].coords[i]}, {preds[s].visibility[i]}});
      g1.push_back({{gts[s].coords[i]}, {gts[s].visibility[i]}});
    }
    rows.push_back({"all", std::string(names[i]), all.per_landmark.empty() ? std::nullopt : all.per_landmark[i],
                    pdl_or_empty(p1, g1), g1.size()});
  }
  rows.push_back({"all", "mean", all.mean, pdl_or_empty(preds, gts), gts.size()});
  for (geom::Subset sub : geom::kAllSubsets) {
    std::vector<geom::LandmarkSet> ps, gs;
    for (std::size_t s = 0; s < gts.size(); ++s)
      if (subsets[s] == sub) {
        ps.push_back(preds[s]);
        gs.push_back(gts[s]);
      }
    rows.push_back({std::string(geom::subset_name(sub)), "mean", geom::dataset_normalized_error(ps, gs).mean,
                    pdl_or_empty(ps, gs), gs.size()});
  }
  return rows;
}

void write_metrics_csv(const std::filesystem::path& path, std::span<const MetricRow> rows, double threshold_px) {
  std::ostringstream os;
  os << "subset,landmark_name,NE,PDL@" << threshold_label(threshold_px) << "px,sample_count\n";
  for (const MetricRow& r : rows)
    os << r.subset << ',' << r.landmark << ',' << fmt(r.ne) << ',' << fmt(r.pdl) << ',' << r.count << '\n';
  write_text(path, os.str());
}

std::vector<MetricRow> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read metrics file " + path.string());
  std::string line;
  std::getline(is, line);
  if (line.rfind("subset,landmark_name,NE,PDL@", 0) != 0)
    throw std::runtime_error(path.string() + ": not a metrics file");
  std::vector<MetricRow> rows;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 5) throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected 5 fields");
    MetricRow r{f[0], f[1], std::nullopt, std::nullopt, std::stoull(f[4])};
    if (!f[2].empty()) r.ne = std::stod(f[2]);
    if (!f[3].empty()) r.pdl = std::stod(f[3]);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<double> pdl_curve(std::span<const geom::LandmarkSet> preds, std::span<const geom::LandmarkSet> gts,
                              std::span<const double> thresholds_px, double image_side) {
  if (preds.size() != gts.size()) throw std::invalid_argument("pdl_curve: prediction/ground-truth count mismatch");
  // Sorted pixel distances make every threshold a binary search.
  std::vector<double> d;
  for (std::size_t s = 0; s < gts.size(); ++s)
    for (std::size_t i = 0; i < gts[s].size(); ++i) {
      if (gts[s].visibility[i] == geom::Visibility::Truncated) continue;
      d.push_back(std::hypot(preds[s].coords[i].x - gts[s].coords[i].x, preds[s].coords[i].y - gts[s].coords[i].y) *
                  image_side);
    }
  std::sort(d.begin(), d.end());
  std::vector<double> out;
  for (double t : thresholds_px) {
    if (d.empty()) {
      out.push_back(0.0);
      continue;
    }
    const auto hit = std::upper_bound(d.begin(), d.end(), t) - d.begin();
    out.push_back(static_cast<double>(hit) / static_cast<double>(d.size()));
  }
  return out;
}

std::vector<double> threshold_grid(double max_px, std::size_t steps) {
  if (!(max_px > 0.0) || steps == 0) throw std::invalid_argument("threshold grid: need max > 0 and steps >= 1");
  std::vector<double> t(steps);
  for (std::size_t i = 0; i < steps; ++i) t[i] = max_px * static_cast<double>(i + 1) / static_cast<double>(steps);
  return t;
}

std::string svg_line_plot(std::string_view title, std::string_view x_label, std::string_view y_label,
                          std::span<const Series> series) {
  const double W = 640, H = 420, left = 64, right = 170, top = 40, bottom = 56;
  const double pw = W - left - right, ph = H - top - bottom;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  bool any = false;
  for (const Series& s : series) {
    if (s.x.size() != s.y.size()) throw std::invalid_argument("svg plot: series '" + s.name + "' has ragged data");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!any) x0 = x1 = s.x[i], y0 = y1 = s.y[i], any = true;
      x0 = std::min(x0, s.x[i]), x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]), y1 = std::max(y1, s.y[i]);
    }
  }
  y0 = std::min(y0, 0.0);
  if (x1 <= x0) x1 = x0 + 1;
  if (y1 <= y0) y1 = y0 + 1;
  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return top + ph - (y - y0) / (y1 - y0) * ph; };
  char buf[256];
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
     << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << xml_escape(title)
     << "</text>\n";
  std::snprintf(buf, sizeof buf, "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"none\" stroke=\"#333\"/>\n",
                left, top, pw, ph);
  os << buf;
  for (int i = 0; i <= 5; ++i) {
    const double xv = x0 + (x1 - x0) * i / 5.0, yv = y0 + (y1 - y0) * i / 5.0;
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#ddd\"/>"
                  "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">%.3g</text>\n",
                  px(xv), top, px(xv), top + ph, px(xv), top + ph + 16, xv);
    os << buf;
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#ddd\"/>"
                  "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"end\">%.3g</text>\n",
                  left, py(yv), left + pw, py(yv), left - 6, py(yv) + 4, yv);
    os << buf;
  }
  os << "<text x=\"" << left + pw / 2 << "\" y=\"" << H - 14 << "\" text-anchor=\"middle\">" << xml_escape(x_label)
     << "</text>\n";
  os << "<text x=\"16\" y=\"" << top + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
     << top + ph / 2 << ")\">" << xml_escape(y_label) << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const Series& s = series[k];
    const char* color = kPalette[k % std::size(kPalette)];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%s%.2f,%.2f", i ? " " : "", px(s.x[i]), py(s.y[i]));
      os << buf;
    }
    os << "\"/>\n";
    const double ly = top + 14 + 18.0 * static_cast<double>(k);
    std::snprintf(buf, sizeof buf, "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"%s\" stroke-width=\"3\"/>",
                  left + pw + 12, ly, left + pw + 32, ly, color);
    os << buf << "<text x=\"" << left + pw + 38 << "\" y=\"" << ly + 4 << "\">" << xml_escape(s.name) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
  if (!os) throw std::runtime_error("write failed for " + path.string());
}

std::array<std::size_t, 5> subset_histogram(std::span<const geom::Subset> subsets) {
  std::array<std::size_t, 5> h{};
  for (geom::Subset s : subsets) ++h[static_cast<std::size_t>(s)];
  return h;
}

std::string format_histogram(const std::array<std::size_t, 5>& counts) {
  std::size_t total = 0, peak = 1;
  for (std::size_t c : counts) total += c, peak = std::max(peak, c);
  std::ostringstream os;
  char buf[96];
  for (geom::Subset s : geom::kAllSubsets) {
    const std::size_t c = counts[static_cast<std::size_t>(s)];
    const double pct = total ? 100.0 * static_cast<double>(c) / static_cast<double>(total) : 0.0;
    std::snprintf(buf, sizeof buf, "  %-12s %6zu  %5.1f%%  ", std::string(geom::subset_name(s)).c_str(), c, pct);
    os << buf << std::string(40 * c / peak, '#') << '\n';
  }
  std::snprintf(buf, sizeof buf, "  %-12s %6zu\n", "total", total);
  os << buf;
  return os.str();
}

}  // namespace dfa::report
