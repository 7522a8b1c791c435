#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "welfare/category.hpp"
#include "welfare/error.hpp"

namespace welfare::ingestion {

struct HouseholdMeta {
  std::string family_id;
  std::string country;
  double monthly_consumption_usd = 0;  // USD per adult equivalent

  bool operator==(const HouseholdMeta&) const = default;
};

struct ScrapeConfig {
  std::string base_url;
  std::vector<Category> categories{kCategoryOrder.begin(), kCategoryOrder.end()};
  int max_concurrent = 4;
  int min_request_interval_ms = 250;
  std::filesystem::path output_root;
  bool resume = true;
  int max_retries = 3;
  int retry_backoff_ms = 500;

  void validate() const {
    if (categories.empty()) throw PreconditionError("scrape config: categories must not be empty");
    if (max_concurrent < 1) throw PreconditionError("scrape config: max_concurrent must be >= 1");
    if (min_request_interval_ms < 0) throw PreconditionError("scrape config: min_request_interval_ms must be >= 0");
    if (max_retries < 0) throw PreconditionError("scrape config: max_retries must be >= 0");
  }
};

struct RawImageAsset {
  std::string family_id;
  Category category = Category::kBathrooms;
  std::string remote_url;
  std::filesystem::path local_path;  // absolute, or relative to the output root
  std::string content_hash;          // sha256 hex
  std::uint64_t byte_size = 0;

  bool operator==(const RawImageAsset&) const = default;
};

// A per-asset failure. Recorded, never fatal to the crawl.
struct AssetError {
  std::string family_id;
  Category category = Category::kBathrooms;
  std::string remote_url;
  std::string message;
  int http_status = 0;
  bool quarantined = false;

  bool operator==(const AssetError&) const = default;
};

struct FamilyListing {
  HouseholdMeta meta;
  std::vector<std::pair<Category, std::string>> images;  // (category, remote url)
};

}  // namespace welfare::ingestion
