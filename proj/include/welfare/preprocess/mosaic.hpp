#pragma once

// Merged input: the seven category photos tiled row-major on a 3x3 grid.
// Cells of absent categories and the two trailing cells are white.

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <array>
#include <filesystem>
#include <optional>

#include "welfare/category.hpp"
#include "welfare/error.hpp"
#include "welfare/preprocess/household.hpp"

namespace welfare::preprocess {

// Raised for households with no usable image; such records are skipped.
class EmptyMosaicError : public PreconditionError {
 public:
  using PreconditionError::PreconditionError;
};

struct MosaicSpec {
  static constexpr int kRows = 3;
  static constexpr int kCols = 3;
  int tile_px = 224;
  cv::Scalar fill{255, 255, 255};

  int side_px() const { return kRows * tile_px; }
  cv::Rect cell(std::size_t position) const {
    const int r = static_cast<int>(position) / kCols;
    const int c = static_cast<int>(position) % kCols;
    return {c * tile_px, r * tile_px, tile_px, tile_px};
  }
};

using CategoryImages = std::array<std::optional<cv::Mat>, kCategoryCount>;

/// Builds a BGR mosaic from in-memory images (any size, 1/3/4 channels).
/// Each present image is squash-resized to tile_px x tile_px.
inline cv::Mat build_mosaic(const CategoryImages& images, const MosaicSpec& spec) {
  if (spec.tile_px <= 0) throw PreconditionError("mosaic tile_px must be positive");
  cv::Mat out(spec.side_px(), spec.side_px(), CV_8UC3, spec.fill);
  bool any = false;
  for (std::size_t i = 0; i < kCategoryCount; ++i) {
    const auto& img = images[i];
    if (!img || img->empty()) continue;
    cv::Mat bgr;
    if (img->channels() == 1)
      cv::cvtColor(*img, bgr, cv::COLOR_GRAY2BGR);
    else if (img->channels() == 4)
      cv::cvtColor(*img, bgr, cv::COLOR_BGRA2BGR);
    else
      bgr = *img;
    if (bgr.depth() != CV_8U) bgr.convertTo(bgr, CV_8U);
    cv::Mat tile = out(spec.cell(i));
    const bool shrinking = bgr.cols >= spec.tile_px && bgr.rows >= spec.tile_px;
    cv::resize(bgr, tile, tile.size(), 0, 0, shrinking ? cv::INTER_AREA : cv::INTER_LINEAR);
    any = true;
  }
  if (!any) throw EmptyMosaicError("mosaic has no present category image");
  return out;
}

/// Loads the record's images from disk. Unreadable files count as absent.
inline CategoryImages load_category_images(const HouseholdRecord& record) {
  CategoryImages images;
  for (std::size_t i = 0; i < kCategoryCount; ++i) {
    if (!record.images[i]) continue;
    cv::Mat m = cv::imread(record.images[i]->string(), cv::IMREAD_COLOR);
    if (!m.empty()) images[i] = std::move(m);
  }
  return images;
}

inline cv::Mat build_mosaic(const HouseholdRecord& record, const MosaicSpec& spec) {
  if (record.present_count() == 0) throw EmptyMosaicError("household " + record.family_id + " has no images");
  try {
    return build_mosaic(load_category_images(record), spec);
  } catch (const EmptyMosaicError&) {
    throw EmptyMosaicError("household " + record.family_id + " has no readable images");
  }
}

}  // namespace welfare::preprocess
