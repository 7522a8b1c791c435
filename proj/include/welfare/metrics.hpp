#pragma once

// Binary-classification and regression metrics. The positive class is
// extreme poverty (label 1) everywhere.

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "welfare/error.hpp"

namespace welfare::metrics {

inline constexpr double kDefaultBeta = 0.8;

struct ConfusionMatrix {
  std::int64_t tn = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
  std::int64_t tp = 0;

  std::int64_t total() const { return tn + fp + fn + tp; }
  bool operator==(const ConfusionMatrix&) const = default;
};

inline void to_json(nlohmann::json& j, const ConfusionMatrix& cm) {
  j = {{"tn", cm.tn}, {"fp", cm.fp}, {"fn", cm.fn}, {"tp", cm.tp}};
}
inline void from_json(const nlohmann::json& j, ConfusionMatrix& cm) {
  cm.tn = j.at("tn");
  cm.fp = j.at("fp");
  cm.fn = j.at("fn");
  cm.tp = j.at("tp");
}

// Row-normalized 2x2 matrix: row 0 is label 0 (tn, fp), row 1 is label 1 (fn, tp).
using NormalizedMatrix = std::array<std::array<double, 2>, 2>;

inline NormalizedMatrix normalize_rows(const ConfusionMatrix& cm) {
  const auto row0 = cm.tn + cm.fp;
  const auto row1 = cm.fn + cm.tp;
  if (row0 == 0 || row1 == 0) throw UndefinedMetricError("cannot normalize a confusion row with zero samples");
  return {{{static_cast<double>(cm.tn) / row0, static_cast<double>(cm.fp) / row0},
           {static_cast<double>(cm.fn) / row1, static_cast<double>(cm.tp) / row1}}};
}

inline ConfusionMatrix confusion(std::span<const int> labels, std::span<const int> preds) {
  if (labels.size() != preds.size())
    throw PreconditionError("confusion: " + std::to_string(labels.size()) + " labels vs " +
                            std::to_string(preds.size()) + " predictions");
  if (labels.empty()) throw PreconditionError("confusion: empty input");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    const int p = preds[i];
    if ((y != 0 && y != 1) || (p != 0 && p != 1)) throw PreconditionError("confusion: labels must be 0 or 1");
    if (y == 0) {
      (p == 0 ? cm.tn : cm.fp)++;
    } else {
      (p == 0 ? cm.fn : cm.tp)++;
    }
  }
  return cm;
}

inline double accuracy(const ConfusionMatrix& cm) {
  if (cm.total() <= 0) throw UndefinedMetricError("accuracy of an empty confusion matrix");
  return static_cast<double>(cm.tn + cm.tp) / static_cast<double>(cm.total());
}

inline double precision(const ConfusionMatrix& cm) {
  if (cm.tp + cm.fp == 0) throw UndefinedMetricError("precision undefined: no positive predictions");
  return static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fp);
}

inline double recall(const ConfusionMatrix& cm) {
  if (cm.tp + cm.fn == 0) throw UndefinedMetricError("recall undefined: no positive labels");
  return static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fn);
}

/// Weighted harmonic mean of precision and recall; beta < 1 favours precision.
inline double fbeta(double precision, double recall, double beta = kDefaultBeta) {
  if (!(beta > 0)) throw DomainError("fbeta: beta must be positive");
  if (precision < 0 || precision > 1 || recall < 0 || recall > 1)
    throw DomainError("fbeta: precision and recall must lie in [0,1]");
  if (precision == 0 && recall == 0) throw UndefinedMetricError("fbeta undefined: precision = recall = 0");
  const double b2 = beta * beta;
  return (1 + b2) * precision * recall / (b2 * precision + recall);
}

struct ClassificationScores {
  double accuracy = 0;
  double precision = 0;
  double recall = 0;
  double fbeta = 0;
};

inline ClassificationScores classification_scores(const ConfusionMatrix& cm, double beta = kDefaultBeta) {
  ClassificationScores s;
  s.accuracy = accuracy(cm);
  s.precision = precision(cm);
  s.recall = recall(cm);
  s.fbeta = fbeta(s.precision, s.recall, beta);
  return s;
}

// Validated (prediction, target) pairs.
class RegressionPairs {
 public:
  RegressionPairs(std::vector<double> predictions, std::vector<double> targets)
      : predictions_(std::move(predictions)), targets_(std::move(targets)) {
    if (predictions_.size() != targets_.size())
      throw PreconditionError("regression pairs: length mismatch");
    if (predictions_.empty()) throw PreconditionError("regression pairs: empty input");
    for (std::size_t i = 0; i < size(); ++i)
      if (!std::isfinite(predictions_[i]) || !std::isfinite(targets_[i]))
        throw PreconditionError("regression pairs: non-finite value at index " + std::to_string(i));
  }

  std::size_t size() const { return targets_.size(); }
  const std::vector<double>& predictions() const { return predictions_; }
  const std::vector<double>& targets() const { return targets_; }

 private:
  std::vector<double> predictions_;
  std::vector<double> targets_;
};

inline double sum_squared_error(const RegressionPairs& p) {
  double s = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = p.predictions()[i] - p.targets()[i];
    s += d * d;
  }
  return s;
}

inline double total_sum_of_squares(const RegressionPairs& p) {
  double mean = 0;
  for (double t : p.targets()) mean += t;
  mean /= static_cast<double>(p.size());
  double s = 0;
  for (double t : p.targets()) s += (t - mean) * (t - mean);
  return s;
}

inline double rmse(const RegressionPairs& p) {
  return std::sqrt(sum_squared_error(p) / static_cast<double>(p.size()));
}

inline double r_squared(const RegressionPairs& p) {
  const double sst = total_sum_of_squares(p);
  if (sst == 0) throw UndefinedMetricError("r_squared undefined: targets have zero variance");
  return 1.0 - sum_squared_error(p) / sst;
}

}  // namespace welfare::metrics
