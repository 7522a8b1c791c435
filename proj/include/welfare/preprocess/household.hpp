#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "welfare/category.hpp"
#include "welfare/error.hpp"
#include "welfare/ingestion/manifest.hpp"

namespace welfare::preprocess {

enum class IncomeGroup { kLIC, kLMIC, kUMIC, kHIC };

inline constexpr std::array<std::string_view, 4> kIncomeGroupNames = {"LIC", "LMIC", "UMIC", "HIC"};

inline std::string_view to_string(IncomeGroup g) { return kIncomeGroupNames[static_cast<std::size_t>(g)]; }

inline IncomeGroup parse_income_group(std::string_view s) {
  for (std::size_t i = 0; i < kIncomeGroupNames.size(); ++i)
    if (kIncomeGroupNames[i] == s) return static_cast<IncomeGroup>(i);
  throw ParseError("unknown income group '" + std::string(s) + "'", 0);
}

struct HouseholdRecord {
  std::string family_id;
  std::string country;
  std::optional<IncomeGroup> income_group;
  double monthly_consumption_usd = 0;
  double log_consumption = 0;  // natural log
  std::array<std::optional<std::filesystem::path>, kCategoryCount> images;
  std::optional<int> poverty_label;

  const std::optional<std::filesystem::path>& image(Category c) const { return images[category_index(c)]; }
  std::size_t present_count() const {
    std::size_t n = 0;
    for (const auto& i : images) n += i.has_value();
    return n;
  }
};

inline HouseholdRecord make_record(std::string family_id, std::string country, double monthly_consumption_usd) {
  if (!(monthly_consumption_usd > 0) || !std::isfinite(monthly_consumption_usd))
    throw DomainError("household " + family_id + ": consumption must be positive");
  HouseholdRecord r;
  r.family_id = std::move(family_id);
  r.country = std::move(country);
  r.monthly_consumption_usd = monthly_consumption_usd;
  r.log_consumption = std::log(monthly_consumption_usd);
  return r;
}

/// Image paths are resolved against `root` (the manifest directory).
inline std::vector<HouseholdRecord> records_from_manifest(const ingestion::DatasetManifest& manifest,
                                                          const std::filesystem::path& root) {
  std::vector<HouseholdRecord> out;
  out.reserve(manifest.rows.size());
  for (const auto& row : manifest.rows) {
    auto r = make_record(row.meta.family_id, row.meta.country, row.meta.monthly_consumption_usd);
    for (std::size_t i = 0; i < kCategoryCount; ++i)
      if (const auto& a = row.assets[i]) r.images[i] = root / a->path;
    out.push_back(std::move(r));
  }
  return out;
}

/// OECD-modified scale: head 1, each further adult 0.5, each child under 14 0.3.
inline double compute_adult_equivalents(int n_adults, int n_children_under_14) {
  if (n_adults < 1) throw DomainError("a household needs at least one adult (the head)");
  if (n_children_under_14 < 0) throw DomainError("child count must be non-negative");
  return 1.0 + 0.5 * (n_adults - 1) + 0.3 * n_children_under_14;
}

inline constexpr double kOutlierCapUsd = 5000.0;

// Drops households consuming strictly more than the cap. Order is preserved.
inline std::vector<HouseholdRecord> filter_outliers(std::vector<HouseholdRecord> records,
                                                    double cap_usd = kOutlierCapUsd) {
  if (!(cap_usd > 0)) throw DomainError("outlier cap must be positive");
  std::erase_if(records, [&](const HouseholdRecord& r) { return r.monthly_consumption_usd > cap_usd; });
  return records;
}

}  // namespace welfare::preprocess
