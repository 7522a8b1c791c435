#pragma once

// MetricsReport: the evaluation artifact shared by training, reporting and
// the run registry. report.json holds the scalars; the raw
// (prediction, target) pairs go to a sibling CSV named by pairs_path.

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "welfare/error.hpp"
#include "welfare/metrics.hpp"

namespace welfare {

enum class Task { kRegression, kClassification };

inline std::string to_string(Task t) { return t == Task::kRegression ? "regression" : "classification"; }

inline Task parse_task(const std::string& s) {
  if (s == "regression" || s == "reg") return Task::kRegression;
  if (s == "classification" || s == "clf") return Task::kClassification;
  throw PreconditionError("unknown task '" + s + "'");
}

struct MetricsReport {
  Task task = Task::kRegression;
  std::size_t n_valid = 0;
  std::map<std::string, double> metrics;
  std::optional<metrics::ConfusionMatrix> confusion;
  // Regression: predicted / true log consumption. Classification:
  // P(class 1) / true label.
  std::vector<double> predictions;
  std::vector<double> targets;
  std::string pairs_path = "pairs.csv";

  bool operator==(const MetricsReport&) const = default;
};

inline nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json metrics = nlohmann::json::object();
  for (const auto& [k, v] : r.metrics) metrics[k] = std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
  return {{"task", to_string(r.task)},
          {"n_valid", r.n_valid},
          {"metrics", metrics},
          {"confusion", r.confusion ? nlohmann::json(*r.confusion) : nlohmann::json(nullptr)},
          {"pairs_path", r.pairs_path}};
}

inline std::string pairs_csv(const MetricsReport& r) {
  std::string out = "prediction,target\n";
  for (std::size_t i = 0; i < r.predictions.size(); ++i)
    out += fmt::format("{:.17g},{:.17g}\n", r.predictions[i], r.targets[i]);
  return out;
}

/// Writes report.json (or `file`) plus the pairs CSV next to it.
inline void save_report(const MetricsReport& r, const std::filesystem::path& file) {
  std::filesystem::create_directories(file.parent_path());
  std::ofstream(file, std::ios::binary) << to_json(r).dump(2) << "\n";
  std::ofstream(file.parent_path() / r.pairs_path, std::ios::binary) << pairs_csv(r);
}

inline MetricsReport load_report(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw DataUnavailableError("cannot read report " + file.string());
  const auto j = nlohmann::json::parse(in);
  MetricsReport r;
  r.task = parse_task(j.at("task"));
  r.n_valid = j.at("n_valid");
  for (const auto& [k, v] : j.at("metrics").items()) r.metrics[k] = v.is_null() ? std::nan("") : v.get<double>();
  if (!j.at("confusion").is_null()) r.confusion = j.at("confusion").get<metrics::ConfusionMatrix>();
  r.pairs_path = j.value("pairs_path", "pairs.csv");
  std::ifstream pairs(file.parent_path() / r.pairs_path);
  std::string line;
  std::getline(pairs, line);  // header
  while (std::getline(pairs, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ParseError("pairs csv: missing comma", 0);
    r.predictions.push_back(std::stod(line.substr(0, comma)));
    r.targets.push_back(std::stod(line.substr(comma + 1)));
  }
  return r;
}

}  // namespace welfare
