#pragma once

// Global configuration: one JSON file (--config) with every knob the
// pipeline stages read. Unknown keys are rejected.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "welfare/error.hpp"
#include "welfare/ingestion/manifest.hpp"
#include "welfare/preprocess/household.hpp"
#include "welfare/preprocess/income_groups.hpp"

namespace welfare::orchestration {

inline constexpr const char* kDataRootEnv = "WEALTH_DATA_ROOT";

struct GlobalConfig {
  std::filesystem::path data_root;
  std::uint64_t seed = 0;

  // ingestion
  std::string base_url;  // empty: the manifest must already exist
  std::optional<std::filesystem::path> manifest_dir;
  int max_concurrent = 4;
  int min_request_interval_ms = 250;

  // preprocess
  double cap_usd = preprocess::kOutlierCapUsd;
  int tile_px = 224;
  std::filesystem::path income_groups_file = preprocess::kDefaultIncomeGroupsFile;

  // modeling
  std::string backbone_id = "resnet-mini";
  int input_px = 224;
  int epochs = 30;
  int batch_size = 32;
  double learning_rate = 1e-3;
  double weight_decay = 0.0;
  std::optional<std::string> backbone_weights;

  std::filesystem::path raw_dir() const { return manifest_dir ? *manifest_dir : data_root / "raw"; }
  std::filesystem::path runs_dir() const { return data_root / "runs"; }
  std::filesystem::path registry_path() const { return data_root / "registry.jsonl"; }

  void validate() const {
    if (data_root.empty())
      throw ValidationError(std::string("no data root: pass --data-root, set data_root in the config, or set ") +
                            kDataRootEnv);
    if (tile_px < 1) throw ValidationError("tile_px must be >= 1");
    if (input_px < 8) throw ValidationError("input_px must be >= 8");
    if (epochs < 1) throw ValidationError("epochs must be >= 1");
    if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
    if (!(learning_rate > 0)) throw ValidationError("learning_rate must be positive");
    if (!(cap_usd > 0)) throw ValidationError("cap_usd must be positive");
    if (max_concurrent < 1) throw ValidationError("max_concurrent must be >= 1");
    if (min_request_interval_ms < 0) throw ValidationError("min_request_interval_ms must be >= 0");
  }

  // Fields that can change a run's outputs. Paths, concurrency and the
  // scrape source are left out.
  nlohmann::json output_affecting() const {
    return {{"seed", seed},
            {"cap_usd", cap_usd},
            {"tile_px", tile_px},
            {"income_groups_file", income_groups_file.filename().string()},
            {"backbone_id", backbone_id},
            {"input_px", input_px},
            {"epochs", epochs},
            {"batch_size", batch_size},
            {"learning_rate", learning_rate},
            {"weight_decay", weight_decay},
            {"backbone_weights", backbone_weights ? nlohmann::json(*backbone_weights) : nlohmann::json(nullptr)}};
  }
};

inline void to_json(nlohmann::json& j, const GlobalConfig& c) {
  j = c.output_affecting();
  j["data_root"] = c.data_root.string();
  j["base_url"] = c.base_url;
  j["manifest_dir"] = c.manifest_dir ? nlohmann::json(c.manifest_dir->string()) : nlohmann::json(nullptr);
  j["max_concurrent"] = c.max_concurrent;
  j["min_request_interval_ms"] = c.min_request_interval_ms;
  j["income_groups_file"] = c.income_groups_file.string();
}

inline void from_json(const nlohmann::json& j, GlobalConfig& c) {
  static const std::set<std::string> kKeys = {
      "data_root", "seed",    "base_url",  "manifest_dir", "max_concurrent", "min_request_interval_ms",
      "cap_usd",   "tile_px", "income_groups_file", "backbone_id", "input_px", "epochs",
      "batch_size", "learning_rate", "weight_decay", "backbone_weights"};
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  for (const auto& [k, _] : j.items())
    if (!kKeys.contains(k)) throw ValidationError("unknown config key '" + k + "'");
  try {
    if (j.contains("data_root")) c.data_root = j["data_root"].get<std::string>();
    c.seed = j.value("seed", c.seed);
    c.base_url = j.value("base_url", c.base_url);
    if (j.contains("manifest_dir") && !j["manifest_dir"].is_null())
      c.manifest_dir = std::filesystem::path(j["manifest_dir"].get<std::string>());
    c.max_concurrent = j.value("max_concurrent", c.max_concurrent);
    c.min_request_interval_ms = j.value("min_request_interval_ms", c.min_request_interval_ms);
    c.cap_usd = j.value("cap_usd", c.cap_usd);
    c.tile_px = j.value("tile_px", c.tile_px);
    if (j.contains("income_groups_file")) c.income_groups_file = j["income_groups_file"].get<std::string>();
    c.backbone_id = j.value("backbone_id", c.backbone_id);
    c.input_px = j.value("input_px", c.input_px);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    if (j.contains("backbone_weights") && !j["backbone_weights"].is_null())
      c.backbone_weights = j["backbone_weights"].get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad config value: ") + e.what());
  }
}

/// Reads a config file. Relative paths inside it resolve against the
/// file's directory.
inline GlobalConfig load_config(const std::filesystem::path& file) {
  if (!std::filesystem::exists(file)) throw ValidationError("config file not found: " + file.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(ingestion::read_text(file));
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("config " + file.string() + ": " + e.what());
  }
  auto c = j.get<GlobalConfig>();
  const auto base = file.parent_path();
  auto anchor = [&](std::filesystem::path& p) {
    if (!p.empty() && p.is_relative()) p = base / p;
  };
  anchor(c.data_root);
  if (c.manifest_dir) anchor(*c.manifest_dir);
  if (j.contains("income_groups_file")) anchor(c.income_groups_file);
  return c;
}

/// Fills data_root from the override, then the environment, if unset.
inline void resolve_data_root(GlobalConfig& c, const std::optional<std::filesystem::path>& cli_override = {}) {
  if (cli_override && !cli_override->empty()) {
    c.data_root = *cli_override;
    return;
  }
  if (!c.data_root.empty()) return;
  if (const char* env = std::getenv(kDataRootEnv); env && *env) c.data_root = env;
}

}  // namespace welfare::orchestration
