#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "welfare/category.hpp"
#include "welfare/error.hpp"
#include "welfare/metrics.hpp"
#include "welfare/metrics_report.hpp"
#include "welfare/nn/network.hpp"

namespace welfare::modeling {

// What one training sample is: a household mosaic, one category's photo,
// or every category photo pooled as separate samples.
struct InputMode {
  enum class Kind { kMerged, kCategory, kPooled };
  Kind kind = Kind::kMerged;
  Category category = Category::kBathrooms;  // kCategory only

  static InputMode merged() { return {Kind::kMerged, Category::kBathrooms}; }
  static InputMode pooled() { return {Kind::kPooled, Category::kBathrooms}; }
  static InputMode single(Category c) { return {Kind::kCategory, c}; }

  static InputMode parse(const std::string& s) {
    if (s == "merged") return merged();
    if (s == "pooled") return pooled();
    if (s.starts_with("category:")) return single(parse_category(s.substr(9)));
    throw PreconditionError("unknown input mode '" + s + "' (merged, pooled, category:<slug>)");
  }
  std::string str() const {
    switch (kind) {
      case Kind::kMerged: return "merged";
      case Kind::kPooled: return "pooled";
      default: return "category:" + std::string(slug(category));
    }
  }
  bool operator==(const InputMode&) const = default;
};

enum class Augmentation { kNone, kFlipsCrops };

struct TrainConfig {
  Task task = Task::kRegression;
  InputMode input = InputMode::merged();
  std::string backbone_id = "resnet-mini";
  int input_px = 224;
  int epochs = 30;
  int batch_size = 32;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  Augmentation augmentation = Augmentation::kNone;
  double beta = metrics::kDefaultBeta;
  double weight_decay = 0.0;
  std::optional<std::string> backbone_weights;  // checkpoint to initialise the backbone from

  int outputs() const { return task == Task::kRegression ? 1 : 2; }
  nn::ArchSpec arch() const { return {backbone_id, input_px, outputs()}; }

  void validate() const {
    if (epochs < 1) throw PreconditionError("epochs must be >= 1");
    if (batch_size < 1) throw PreconditionError("batch_size must be >= 1");
    if (!(learning_rate > 0)) throw PreconditionError("learning_rate must be positive");
    if (input_px < 8) throw PreconditionError("input_px must be >= 8");
    if (!(beta > 0)) throw PreconditionError("beta must be positive");
    nn::backbone_widths(backbone_id);
  }

  // Mosaics keep their tile layout; flips would move categories.
  static Augmentation default_augmentation(const InputMode& m) {
    return m.kind == InputMode::Kind::kMerged ? Augmentation::kNone : Augmentation::kFlipsCrops;
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"task", to_string(c.task)},
       {"input", c.input.str()},
       {"backbone_id", c.backbone_id},
       {"input_px", c.input_px},
       {"epochs", c.epochs},
       {"batch_size", c.batch_size},
       {"learning_rate", c.learning_rate},
       {"seed", c.seed},
       {"augmentation", c.augmentation == Augmentation::kNone ? "none" : "standard_flips_crops"},
       {"beta", c.beta},
       {"weight_decay", c.weight_decay},
       {"backbone_weights", c.backbone_weights ? nlohmann::json(*c.backbone_weights) : nlohmann::json(nullptr)}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.task = parse_task(j.at("task"));
  c.input = InputMode::parse(j.at("input"));
  c.backbone_id = j.at("backbone_id");
  c.input_px = j.at("input_px");
  c.epochs = j.at("epochs");
  c.batch_size = j.at("batch_size");
  c.learning_rate = j.at("learning_rate");
  c.seed = j.at("seed");
  c.augmentation = j.at("augmentation") == "none" ? Augmentation::kNone : Augmentation::kFlipsCrops;
  c.beta = j.value("beta", metrics::kDefaultBeta);
  c.weight_decay = j.value("weight_decay", 0.0);
  if (j.contains("backbone_weights") && !j["backbone_weights"].is_null()) c.backbone_weights = j["backbone_weights"];
}

}  // namespace welfare::modeling
