#pragma once

// Manifest -> labeled household dataset: outlier filter, income groups,
// poverty labels, mosaics and the household-level train/valid split.
// Persisted as labeled.jsonl next to a mosaics/ directory.

#include <spdlog/spdlog.h>

#include <opencv2/imgcodecs.hpp>

#include <atomic>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "welfare/category.hpp"
#include "welfare/error.hpp"
#include "welfare/ingestion/manifest.hpp"
#include "welfare/preprocess/household.hpp"
#include "welfare/preprocess/income_groups.hpp"
#include "welfare/preprocess/mosaic.hpp"
#include "welfare/preprocess/poverty.hpp"
#include "welfare/preprocess/sampling.hpp"

namespace welfare::preprocess {

inline constexpr const char* kLabeledFile = "labeled.jsonl";
inline constexpr const char* kMosaicDir = "mosaics";

enum class SplitAssignment { kTrain, kValid };

struct LabeledHousehold {
  HouseholdRecord record;
  std::optional<std::filesystem::path> mosaic;  // absent when no image was readable
  SplitAssignment split = SplitAssignment::kTrain;
};

struct PreprocessOptions {
  PovertyPolicy policy = PovertyPolicy::uniform();
  double cap_usd = kOutlierCapUsd;
  std::uint64_t seed = 0;
  MosaicSpec mosaic;
  bool write_mosaics = true;
  int workers = 1;
};

struct PreprocessResult {
  std::vector<LabeledHousehold> households;
  std::size_t households_in = 0;
  std::size_t households_kept = 0;
  std::array<std::size_t, kCategoryCount> category_counts{};
  std::size_t mosaic_count = 0;
  std::size_t positives = 0;
};

inline std::string relative_to(const std::filesystem::path& p, const std::filesystem::path& base) {
  auto rel = p.lexically_relative(base);
  if (rel.empty() || rel.native().starts_with("..")) return p.generic_string();
  return rel.generic_string();
}

inline nlohmann::json to_json(const LabeledHousehold& h, const std::filesystem::path& root) {
  const auto& r = h.record;
  nlohmann::json images = nlohmann::json::object();
  for (std::size_t i = 0; i < kCategoryCount; ++i)
    images[std::string(kCategorySlugs[i])] =
        r.images[i] ? nlohmann::json(relative_to(*r.images[i], root)) : nlohmann::json(nullptr);
  return {{"family_id", r.family_id},
          {"country", r.country},
          {"monthly_consumption_usd", r.monthly_consumption_usd},
          {"log_consumption", r.log_consumption},
          {"income_group", r.income_group ? nlohmann::json(std::string(to_string(*r.income_group))) : nlohmann::json(nullptr)},
          {"poverty_label", r.poverty_label ? nlohmann::json(*r.poverty_label) : nlohmann::json(nullptr)},
          {"split_assignment", h.split == SplitAssignment::kTrain ? "train" : "valid"},
          {"mosaic", h.mosaic ? nlohmann::json(relative_to(*h.mosaic, root)) : nlohmann::json(nullptr)},
          {"assets", std::move(images)}};
}

inline LabeledHousehold labeled_from_json(const nlohmann::json& j, const std::filesystem::path& root) {
  auto resolve = [&](const std::string& s) {
    std::filesystem::path p(s);
    return p.is_absolute() ? p : root / p;
  };
  LabeledHousehold h;
  h.record = make_record(j.at("family_id"), j.at("country"), j.at("monthly_consumption_usd"));
  if (!j.at("income_group").is_null()) h.record.income_group = parse_income_group(j.at("income_group").get<std::string>());
  if (!j.at("poverty_label").is_null()) h.record.poverty_label = j.at("poverty_label").get<int>();
  h.split = j.at("split_assignment") == "valid" ? SplitAssignment::kValid : SplitAssignment::kTrain;
  if (!j.at("mosaic").is_null()) h.mosaic = resolve(j.at("mosaic").get<std::string>());
  for (const auto& [key, value] : j.at("assets").items())
    if (!value.is_null()) h.record.images[category_index(parse_category(key))] = resolve(value.get<std::string>());
  return h;
}

inline void write_labeled(const std::filesystem::path& root, const std::vector<LabeledHousehold>& rows) {
  std::filesystem::create_directories(root);
  std::string text;
  for (const auto& h : rows) text += to_json(h, root).dump() + "\n";
  ingestion::write_text_atomic(root / kLabeledFile, text);
}

inline std::vector<LabeledHousehold> load_labeled(const std::filesystem::path& root_or_file) {
  const auto file = std::filesystem::is_directory(root_or_file) ? root_or_file / kLabeledFile : root_or_file;
  if (!std::filesystem::exists(file)) throw DataUnavailableError("no labeled dataset at " + file.string());
  std::istringstream in(ingestion::read_text(file));
  std::vector<LabeledHousehold> out;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(labeled_from_json(nlohmann::json::parse(line), file.parent_path()));
  return out;
}

/// Labels records in place. Income groups are always attached; by-group
/// policies need them.
inline void attach_labels(std::vector<HouseholdRecord>& records, const IncomeGroupTable& table,
                          const PovertyPolicy& policy) {
  for (auto& r : records) {
    r.income_group = assign_income_group(r.country, table);
    r.poverty_label = label_poverty(r, policy);
  }
}

inline PreprocessResult run_preprocess(const ingestion::DatasetManifest& manifest,
                                       const std::filesystem::path& manifest_dir, const std::filesystem::path& out_root,
                                       const IncomeGroupTable& table, const PreprocessOptions& opt) {
  PreprocessResult res;
  auto records = records_from_manifest(manifest, manifest_dir);
  res.households_in = records.size();
  records = filter_outliers(std::move(records), opt.cap_usd);
  res.households_kept = records.size();
  attach_labels(records, table, opt.policy);

  std::vector<LabeledHousehold> rows(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) rows[i].record = std::move(records[i]);

  if (opt.write_mosaics) {
    const auto dir = out_root / kMosaicDir;
    std::filesystem::create_directories(dir);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t i; (i = next++) < rows.size();) {
        try {
          const cv::Mat m = build_mosaic(rows[i].record, opt.mosaic);
          const auto path = dir / (rows[i].record.family_id + ".png");
          if (!cv::imwrite(path.string(), m)) throw Error("cannot write " + path.string());
          rows[i].mosaic = path;
        } catch (const EmptyMosaicError& e) {
          spdlog::warn("no mosaic: {}", e.what());
        }
      }
    };
    std::vector<std::jthread> pool;
    for (int w = 0; w < std::max(1, opt.workers); ++w) pool.emplace_back(worker);
  }

  if (rows.size() >= 2) {
    const auto valid = validation_indices(rows.size(), SplitSpec{0.8, opt.seed, false});
    for (auto i : valid) rows[i].split = SplitAssignment::kValid;
  }

  for (const auto& h : rows) {
    for (std::size_t c = 0; c < kCategoryCount; ++c) res.category_counts[c] += h.record.images[c].has_value();
    res.mosaic_count += h.mosaic.has_value();
    res.positives += h.record.poverty_label.value_or(0);
  }
  res.households = std::move(rows);
  return res;
}

}  // namespace welfare::preprocess
