#pragma once

// Figure renderers: prediction-vs-target scatter with the identity line,
// raw and row-normalized confusion heatmaps, and the per-category table.
// Output is a function of the inputs only, so files are byte-stable.

#include <fmt/format.h>

#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "welfare/category.hpp"
#include "welfare/error.hpp"
#include "welfare/metrics.hpp"
#include "welfare/metrics_report.hpp"
#include "welfare/reporting/png.hpp"

namespace welfare::reporting {

inline constexpr int kCanvasPx = 1000;

struct RenderOptions {
  std::string title;
  std::string run_id;
  std::string config_hash;

  std::map<std::string, std::string> metadata() const {
    std::map<std::string, std::string> m;
    if (!run_id.empty()) m["run_id"] = run_id;
    if (!config_hash.empty()) m["config_hash"] = config_hash;
    if (!title.empty()) m["Title"] = title;
    return m;
  }
};

namespace detail {
const cv::Scalar kBlack(0, 0, 0);
const cv::Scalar kGrey(160, 160, 160);
const cv::Scalar kWhite(255, 255, 255);

inline void text(cv::Mat& img, const std::string& s, cv::Point at, double scale = 0.7, int thickness = 1,
                 cv::Scalar color = kBlack) {
  cv::putText(img, s, at, cv::FONT_HERSHEY_SIMPLEX, scale, color, thickness, cv::LINE_AA);
}

inline void centered_text(cv::Mat& img, const std::string& s, cv::Point center, double scale, int thickness,
                          cv::Scalar color) {
  int baseline = 0;
  const auto size = cv::getTextSize(s, cv::FONT_HERSHEY_SIMPLEX, scale, thickness, &baseline);
  text(img, s, {center.x - size.width / 2, center.y + size.height / 2}, scale, thickness, color);
}
}  // namespace detail

// Square data window shared by both axes; the identity line runs from the
// bottom-left to the top-right corner.
struct ScatterGeometry {
  double lo = 0;
  double hi = 1;
  int left = 110;
  int top = 90;
  int side = 820;

  cv::Point2d to_pixel(double x, double y) const {
    const double s = side / (hi - lo);
    return {left + (x - lo) * s, top + side - (y - lo) * s};
  }

  static ScatterGeometry fit(const std::vector<double>& xs, const std::vector<double>& ys) {
    double lo = std::min(*std::min_element(xs.begin(), xs.end()), *std::min_element(ys.begin(), ys.end()));
    double hi = std::max(*std::max_element(xs.begin(), xs.end()), *std::max_element(ys.begin(), ys.end()));
    const double pad = hi > lo ? 0.05 * (hi - lo) : 0.5;
    ScatterGeometry g;
    g.lo = lo - pad;
    g.hi = hi + pad;
    return g;
  }
};

struct ScatterPlot {
  cv::Mat image;
  ScatterGeometry geometry;
};

inline std::string scatter_annotation(const MetricsReport& report) {
  auto metric = [&](const char* k) {
    auto it = report.metrics.find(k);
    return it == report.metrics.end() ? std::string("n/a") : fmt::format("{:.6f}", it->second);
  };
  return "rmse = " + metric("rmse") + "   r2 = " + metric("r2_score");
}

inline ScatterPlot draw_scatter(const MetricsReport& report, const RenderOptions& opt = {}) {
  if (report.task != Task::kRegression) throw PreconditionError("scatter needs a regression report");
  if (report.predictions.empty() || report.predictions.size() != report.targets.size())
    throw PreconditionError("scatter needs (prediction, target) pairs");
  ScatterPlot plot;
  plot.geometry = ScatterGeometry::fit(report.predictions, report.targets);
  const auto& g = plot.geometry;
  cv::Mat img(kCanvasPx, kCanvasPx, CV_8UC3, detail::kWhite);

  cv::rectangle(img, cv::Rect(g.left, g.top, g.side, g.side), detail::kBlack, 1);
  for (int t = 0; t <= 5; ++t) {
    const double v = g.lo + (g.hi - g.lo) * t / 5.0;
    const auto px = g.to_pixel(v, v);
    cv::line(img, {static_cast<int>(px.x), g.top + g.side}, {static_cast<int>(px.x), g.top + g.side + 8}, detail::kBlack);
    cv::line(img, {g.left - 8, static_cast<int>(px.y)}, {g.left, static_cast<int>(px.y)}, detail::kBlack);
    detail::text(img, fmt::format("{:.2f}", v), {static_cast<int>(px.x) - 25, g.top + g.side + 32}, 0.55);
    detail::text(img, fmt::format("{:.2f}", v), {g.left - 85, static_cast<int>(px.y) + 6}, 0.55);
  }
  const auto a = g.to_pixel(g.lo, g.lo);
  const auto b = g.to_pixel(g.hi, g.hi);
  cv::line(img, a, b, detail::kBlack, 2, cv::LINE_AA);
  for (std::size_t i = 0; i < report.predictions.size(); ++i)
    cv::circle(img, g.to_pixel(report.predictions[i], report.targets[i]), 5, cv::Scalar(180, 110, 30), cv::FILLED,
               cv::LINE_AA);

  detail::text(img, "predicted", {g.left + g.side / 2 - 50, kCanvasPx - 25}, 0.8, 2);
  detail::text(img, "target", {10, g.top - 20}, 0.8, 2);
  if (!opt.title.empty()) detail::text(img, opt.title, {g.left, 40}, 0.9, 2);
  detail::text(img, scatter_annotation(report), {g.left + 10, g.top + 30}, 0.75, 2);
  plot.image = std::move(img);
  return plot;
}

/// Scatter of predictions (x) against targets (y) with the 45 degree line
/// and rmse/r2 annotated. Returns the geometry used.
inline ScatterGeometry render_scatter(const MetricsReport& report, const std::filesystem::path& out,
                                      const RenderOptions& opt = {}) {
  auto plot = draw_scatter(report, opt);
  write_file(out, encode_png(plot.image, opt.metadata()));
  return plot.geometry;
}

struct ConfusionFigure {
  cv::Mat image;
  std::array<std::array<double, 2>, 2> values{};  // rows: label 0/1, cols: predicted 0/1
  std::array<std::array<std::string, 2>, 2> cell_text;
};

inline ConfusionFigure draw_confusion(const metrics::ConfusionMatrix& cm, bool normalized, const RenderOptions& opt = {}) {
  if (cm.total() <= 0) throw PreconditionError("confusion matrix is empty");
  ConfusionFigure fig;
  const std::array<std::array<double, 2>, 2> raw = {{{static_cast<double>(cm.tn), static_cast<double>(cm.fp)},
                                                     {static_cast<double>(cm.fn), static_cast<double>(cm.tp)}}};
  const auto rates = normalized ? metrics::normalize_rows(cm) : metrics::NormalizedMatrix{};
  double max_v = 0;
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c) {
      fig.values[r][c] = normalized ? rates[r][c] : raw[r][c];
      fig.cell_text[r][c] = normalized ? fmt::format("{:.2f}", rates[r][c]) : fmt::format("{}", static_cast<long long>(raw[r][c]));
      max_v = std::max(max_v, fig.values[r][c]);
    }

  cv::Mat img(kCanvasPx, kCanvasPx, CV_8UC3, detail::kWhite);
  constexpr int kLeft = 220, kTop = 200, kCell = 320;
  // Blue ramp for counts, red ramp for rates (BGR).
  const cv::Scalar full = normalized ? cv::Scalar(40, 40, 200) : cv::Scalar(160, 70, 20);
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c) {
      const double t = max_v > 0 ? fig.values[r][c] / max_v : 0;
      const cv::Scalar color(255 + (full[0] - 255) * t, 255 + (full[1] - 255) * t, 255 + (full[2] - 255) * t);
      const cv::Rect cell(kLeft + c * kCell, kTop + r * kCell, kCell, kCell);
      cv::rectangle(img, cell, color, cv::FILLED);
      cv::rectangle(img, cell, detail::kBlack, 1);
      detail::centered_text(img, fig.cell_text[r][c], {cell.x + kCell / 2, cell.y + kCell / 2}, 1.6, 3,
                            t > 0.55 ? detail::kWhite : detail::kBlack);
    }
  for (int i = 0; i < 2; ++i) {
    detail::centered_text(img, std::to_string(i), {kLeft + i * kCell + kCell / 2, kTop - 30}, 1.0, 2, detail::kBlack);
    detail::centered_text(img, std::to_string(i), {kLeft - 40, kTop + i * kCell + kCell / 2}, 1.0, 2, detail::kBlack);
  }
  detail::centered_text(img, "predicted", {kLeft + kCell, kTop - 90}, 1.0, 2, detail::kBlack);
  detail::text(img, "actual", {20, kTop + kCell + 10}, 1.0, 2);
  detail::text(img, opt.title.empty() ? (normalized ? "confusion (row-normalized)" : "confusion") : opt.title,
               {kLeft, 60}, 1.0, 2);
  fig.image = std::move(img);
  return fig;
}

/// 2x2 heatmap; normalized divides each row by its row sum.
inline ConfusionFigure render_confusion(const metrics::ConfusionMatrix& cm, bool normalized,
                                        const std::filesystem::path& out, const RenderOptions& opt = {}) {
  auto fig = draw_confusion(cm, normalized, opt);
  write_file(out, encode_png(fig.image, opt.metadata()));
  return fig;
}

struct CategoryTableRow {
  std::string name;
  std::size_t n = 0;
  double rmse = 0;
  double r2 = 0;
};

/// Rows in mosaic category order, then "merged". Unknown keys are appended
/// in key order.
inline std::vector<CategoryTableRow> category_table(const std::map<std::string, MetricsReport>& reports) {
  if (reports.empty()) throw PreconditionError("category table needs at least one report");
  std::vector<std::string> order(kCategorySlugs.begin(), kCategorySlugs.end());
  order.emplace_back("merged");
  for (const auto& [k, _] : reports)
    if (std::find(order.begin(), order.end(), k) == order.end()) order.push_back(k);
  std::vector<CategoryTableRow> rows;
  for (const auto& name : order) {
    auto it = reports.find(name);
    if (it == reports.end()) continue;
    const auto& m = it->second.metrics;
    rows.push_back({name, it->second.n_valid, m.contains("rmse") ? m.at("rmse") : std::nan(""),
                    m.contains("r2_score") ? m.at("r2_score") : std::nan("")});
  }
  return rows;
}

/// Writes `out` as aligned plaintext and a sibling .csv.
inline std::vector<CategoryTableRow> render_category_table(const std::map<std::string, MetricsReport>& reports,
                                                           const std::filesystem::path& out) {
  const auto rows = category_table(reports);
  std::string txt = fmt::format("{:<20}{:>8}{:>12}{:>12}\n", "category", "n", "rmse", "r2");
  std::string csv = "category,n,rmse,r2\n";
  for (const auto& r : rows) {
    txt += fmt::format("{:<20}{:>8}{:>12.6f}{:>12.6f}\n", r.name, r.n, r.rmse, r.r2);
    csv += fmt::format("{},{},{:.6f},{:.6f}\n", r.name, r.n, r.rmse, r.r2);
  }
  auto csv_path = out;
  csv_path.replace_extension(".csv");
  if (csv_path == out) csv_path += ".csv";
  write_file(out, txt);
  write_file(csv_path, csv);
  return rows;
}

}  // namespace welfare::reporting
