#pragma once

#include <spdlog/spdlog.h>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <random>
#include <string>
#include <vector>

#include "welfare/error.hpp"
#include "welfare/modeling/config.hpp"
#include "welfare/nn/tensor.hpp"
#include "welfare/preprocess/dataset.hpp"

namespace welfare::modeling {

// One model input. Pixels are kept as 8-bit BGR at input_px and converted
// to floats per step.
struct Sample {
  std::string id;
  cv::Mat image;
  double target = 0.0;  // log consumption
  int label = 0;        // extreme poverty
};

using Dataset = std::vector<Sample>;

inline cv::Mat fit_to_input(const cv::Mat& bgr, int input_px) {
  if (bgr.empty()) throw PreconditionError("empty image");
  cv::Mat img = bgr;
  if (img.channels() == 1) cv::cvtColor(img, img, cv::COLOR_GRAY2BGR);
  if (img.channels() == 4) cv::cvtColor(img, img, cv::COLOR_BGRA2BGR);
  if (img.rows == input_px && img.cols == input_px) return img.clone();
  cv::Mat out;
  const bool shrinking = img.cols >= input_px && img.rows >= input_px;
  cv::resize(img, out, cv::Size(input_px, input_px), 0, 0, shrinking ? cv::INTER_AREA : cv::INTER_LINEAR);
  return out;
}

// RGB planes scaled to roughly [-2, 2].
inline nn::Tensor to_tensor(const cv::Mat& bgr) {
  nn::Tensor t(3, bgr.rows, bgr.cols);
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x)
      for (int c = 0; c < 3; ++c) t.at(c, y, x) = (row[x][2 - c] / 255.0f - 0.5f) / 0.25f;
  }
  return t;
}

/// Random horizontal flip plus a random crop from a 4px zero-padded frame
/// (same output size).
inline nn::Tensor augment(const nn::Tensor& x, std::mt19937_64& rng) {
  constexpr int kPad = 4;
  const bool flip = (rng() & 1u) != 0;
  const int dy = static_cast<int>(rng() % (2 * kPad + 1)) - kPad;
  const int dx = static_cast<int>(rng() % (2 * kPad + 1)) - kPad;
  nn::Tensor out(x.c, x.h, x.w);
  for (int c = 0; c < x.c; ++c)
    for (int y = 0; y < x.h; ++y) {
      const int sy = y + dy;
      if (sy < 0 || sy >= x.h) continue;
      for (int xx = 0; xx < x.w; ++xx) {
        int sx = xx + dx;
        if (sx < 0 || sx >= x.w) continue;
        if (flip) sx = x.w - 1 - sx;
        out.at(c, y, xx) = x.at(c, sy, sx);
      }
    }
  return out;
}

/// Turns labeled households into samples for one input mode. Households
/// without the needed image are skipped.
inline Dataset build_samples(const std::vector<preprocess::LabeledHousehold>& households, const InputMode& mode,
                             int input_px) {
  Dataset out;
  auto add = [&](const preprocess::LabeledHousehold& h, const std::filesystem::path& path, const std::string& id) {
    cv::Mat img = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (img.empty()) {
      spdlog::warn("unreadable image {}", path.string());
      return;
    }
    out.push_back({id, fit_to_input(img, input_px), h.record.log_consumption, h.record.poverty_label.value_or(0)});
  };
  for (const auto& h : households) {
    switch (mode.kind) {
      case InputMode::Kind::kMerged:
        if (h.mosaic) add(h, *h.mosaic, h.record.family_id);
        break;
      case InputMode::Kind::kCategory:
        if (const auto& p = h.record.image(mode.category))
          add(h, *p, h.record.family_id + "/" + std::string(slug(mode.category)));
        break;
      case InputMode::Kind::kPooled:
        for (auto c : kCategoryOrder)
          if (const auto& p = h.record.image(c)) add(h, *p, h.record.family_id + "/" + std::string(slug(c)));
        break;
    }
  }
  return out;
}

}  // namespace welfare::modeling
