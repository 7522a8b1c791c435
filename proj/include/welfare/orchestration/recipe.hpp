#pragma once

// Experiment recipes: ordered stages of (module, operation, parameters).
// Each operation consumes and produces named artifacts; a recipe is valid
// when every consumed artifact was produced by an earlier stage.

#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "welfare/category.hpp"
#include "welfare/error.hpp"
#include "welfare/hash.hpp"
#include "welfare/metrics_report.hpp"
#include "welfare/modeling/config.hpp"
#include "welfare/orchestration/config.hpp"
#include "welfare/preprocess/poverty.hpp"

namespace welfare::orchestration {

struct Stage {
  std::string name;
  std::string module;
  std::string operation;
  nlohmann::json params = nlohmann::json::object();

  std::string op() const { return module + "." + operation; }
  bool operator==(const Stage&) const = default;
};

struct ExperimentRecipe {
  std::string name;
  std::vector<Stage> stages;
  std::vector<std::string> expected_outputs;  // paths relative to the run dir
  std::uint64_t seed = 0;
};

struct OperationSpec {
  std::set<std::string> consumes;
  std::set<std::string> produces;
  std::set<std::string> params;
};

inline const std::map<std::string, OperationSpec>& operation_table() {
  static const std::map<std::string, OperationSpec> table = {
      {"ingestion.acquire", {{}, {"manifest"}, {}}},
      {"preprocess.label", {{"manifest"}, {"dataset"}, {"policy", "mosaics"}}},
      {"modeling.train", {{"dataset"}, {"checkpoint", "report"}, {"task", "input", "balance", "beta"}}},
      {"reporting.scatter", {{"report"}, {"figure"}, {"title"}}},
      {"reporting.confusion", {{"report"}, {"figure"}, {"normalized", "title"}}},
  };
  return table;
}

namespace detail {
template <typename F>
void check_param(const Stage& s, const char* key, F&& check) {
  if (!s.params.contains(key)) return;
  try {
    check(s.params.at(key));
  } catch (const ValidationError&) {
    throw;
  } catch (const std::exception& e) {
    throw ValidationError("stage '" + s.name + "': bad parameter '" + key + "': " + e.what());
  }
}
}  // namespace detail

/// Throws ValidationError describing the first problem found.
inline void validate(const ExperimentRecipe& r) {
  if (r.name.empty()) throw ValidationError("recipe has no name");
  if (r.stages.empty()) throw ValidationError("recipe '" + r.name + "' has no stages");
  std::set<std::string> names;
  std::set<std::string> available;
  for (const auto& s : r.stages) {
    if (s.name.empty()) throw ValidationError("recipe '" + r.name + "': stage without a name");
    if (!names.insert(s.name).second) throw ValidationError("recipe '" + r.name + "': duplicate stage '" + s.name + "'");
    const auto it = operation_table().find(s.op());
    if (it == operation_table().end())
      throw ValidationError("recipe '" + r.name + "': stage '" + s.name + "' has unknown operation '" + s.op() + "'");
    const auto& spec = it->second;
    if (!s.params.is_object()) throw ValidationError("stage '" + s.name + "': params must be an object");
    for (const auto& [k, _] : s.params.items())
      if (!spec.params.contains(k)) throw ValidationError("stage '" + s.name + "': unknown parameter '" + k + "'");
    for (const auto& need : spec.consumes)
      if (!available.contains(need))
        throw ValidationError("stage '" + s.name + "' needs '" + need + "' but no earlier stage produces it");
    detail::check_param(s, "policy", [](const auto& v) { preprocess::PovertyPolicy::parse(v.template get<std::string>()); });
    detail::check_param(s, "task", [](const auto& v) { parse_task(v.template get<std::string>()); });
    detail::check_param(s, "input", [](const auto& v) { modeling::InputMode::parse(v.template get<std::string>()); });
    detail::check_param(s, "balance", [](const auto& v) { (void)v.template get<bool>(); });
    detail::check_param(s, "mosaics", [](const auto& v) { (void)v.template get<bool>(); });
    detail::check_param(s, "normalized", [](const auto& v) { (void)v.template get<bool>(); });
    detail::check_param(s, "title", [](const auto& v) { (void)v.template get<std::string>(); });
    detail::check_param(s, "beta", [](const auto& v) {
      if (!(v.template get<double>() > 0)) throw ValidationError("beta must be positive");
    });
    available.insert(spec.produces.begin(), spec.produces.end());
  }
}

inline nlohmann::json recipe_to_json(const ExperimentRecipe& r) {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& s : r.stages)
    stages.push_back({{"name", s.name}, {"module", s.module}, {"operation", s.operation}, {"params", s.params}});
  return {{"name", r.name}, {"stages", stages}, {"expected_outputs", r.expected_outputs}};
}

/// sha256 over the recipe and the output-affecting config (sorted-key JSON).
inline std::string config_hash(const ExperimentRecipe& r, const GlobalConfig& c) {
  const nlohmann::json doc = {{"recipe", recipe_to_json(r)}, {"config", c.output_affecting()}};
  return sha256_hex(doc.dump());
}

inline std::string run_id_for(const ExperimentRecipe& r, const std::string& hash) {
  return r.name + "-" + hash.substr(0, 12);
}

// Per-stage seed: global seed plus the stage's index.
inline std::uint64_t stage_seed(std::uint64_t global_seed, std::size_t index) { return global_seed + index; }

namespace builtin {

inline ExperimentRecipe regression(const std::string& name, const std::string& input, const std::string& title) {
  const bool merged = input == "merged";
  return {name,
          {{"acquire", "ingestion", "acquire", nlohmann::json::object()},
           {"label", "preprocess", "label", {{"policy", "uniform"}, {"mosaics", merged}}},
           {"train", "modeling", "train", {{"task", "regression"}, {"input", input}}},
           {"scatter", "reporting", "scatter", {{"title", title}}}},
          {"dataset/labeled.jsonl", "config.json", "epochs.jsonl", "checkpoint.bin", "report.json", "pairs.csv",
           "figures/scatter.png"},
          0};
}

inline ExperimentRecipe classification(const std::string& name, const std::string& policy, const std::string& title) {
  return {name,
          {{"acquire", "ingestion", "acquire", nlohmann::json::object()},
           {"label", "preprocess", "label", {{"policy", policy}, {"mosaics", false}}},
           {"train", "modeling", "train",
            {{"task", "classification"}, {"input", "pooled"}, {"balance", true}, {"beta", metrics::kDefaultBeta}}},
           {"confusion-raw", "reporting", "confusion", {{"normalized", false}, {"title", title}}},
           {"confusion-normalized", "reporting", "confusion", {{"normalized", true}, {"title", title}}}},
          {"dataset/labeled.jsonl", "config.json", "epochs.jsonl", "checkpoint.bin", "report.json", "pairs.csv",
           "figures/confusion_raw.png", "figures/confusion_normalized.png"},
          0};
}

}  // namespace builtin

/// Built-in experiments: one regression per category, the merged
/// regression, and the two classification labelings.
inline std::vector<ExperimentRecipe> builtin_recipes() {
  std::vector<ExperimentRecipe> out;
  for (auto c : kCategoryOrder) {
    const std::string s(slug(c));
    out.push_back(builtin::regression("reg-" + s, "category:" + s, s));
  }
  out.push_back(builtin::regression("regression-merged", "merged", "merged"));
  out.push_back(builtin::classification("clf-uniform", "uniform", "extreme poverty, $1.9/day line"));
  out.push_back(builtin::classification("clf-by-income-group", "by-group", "extreme poverty, income-group lines"));
  return out;
}

inline ExperimentRecipe find_recipe(const std::string& name) {
  for (auto& r : builtin_recipes())
    if (r.name == name) return r;
  std::string known;
  for (const auto& r : builtin_recipes()) known += (known.empty() ? "" : ", ") + r.name;
  throw ValidationError("unknown recipe '" + name + "' (built-in: " + known + ")");
}

}  // namespace welfare::orchestration
