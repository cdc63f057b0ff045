#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dfa/geometry.hpp"

namespace dfa::report {

// One line of a metrics table. `landmark` is a landmark name or "mean".
struct MetricRow {
  std::string subset;
  std::string landmark;
  std::optional<double> ne;
  std::optional<double> pdl;
  std::size_t count = 0;
};

// Rows: ("all", each landmark), ("all", "mean"), then (subset, "mean") for
// all five subsets, in that order. Empty groups keep their row with blank
// NE/PDL. The ("all", "mean") NE is the mean of the per-landmark NE values.
std::vector<MetricRow> metric_rows(std::span<const geom::LandmarkSet> preds, std::span<const geom::LandmarkSet> gts,
                                   std::span<const geom::Subset> subsets, std::span<const std::string_view> names,
                                   double threshold_px, double image_side);

// subset,landmark_name,NE,PDL@<t>px,sample_count
void write_metrics_csv(const std::filesystem::path& path, std::span<const MetricRow> rows, double threshold_px);
std::vector<MetricRow> read_metrics_csv(const std::filesystem::path& path);

// PDL at each threshold; 0 for sets with no eligible landmarks.
std::vector<double> pdl_curve(std::span<const geom::LandmarkSet> preds, std::span<const geom::LandmarkSet> gts,
                              std::span<const double> thresholds_px, double image_side);
std::vector<double> threshold_grid(double max_px, std::size_t steps);

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

// Standalone SVG line chart with axes, ticks and a legend.
std::string svg_line_plot(std::string_view title, std::string_view x_label, std::string_view y_label,
                          std::span<const Series> series);
void write_text(const std::filesystem::path& path, std::string_view text);

// Fixed-precision formatting shared by every CSV writer.
std::string fmt(double v);
std::string fmt(const std::optional<double>& v);

std::array<std::size_t, 5> subset_histogram(std::span<const geom::Subset> subsets);
// Text bar chart, one line per subset plus a total line.
std::string format_histogram(const std::array<std::size_t, 5>& counts);

}  // namespace dfa::report
