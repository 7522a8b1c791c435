#pragma once

// Training, prediction and evaluation for the consumption regressor and the
// extreme-poverty classifier. Everything is single-threaded and seeded, so
// a given (config, data) pair reproduces bit-for-bit on one build.

#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "welfare/error.hpp"
#include "welfare/ingestion/manifest.hpp"
#include "welfare/metrics.hpp"
#include "welfare/metrics_report.hpp"
#include "welfare/modeling/checkpoint.hpp"
#include "welfare/modeling/config.hpp"
#include "welfare/modeling/data.hpp"
#include "welfare/nn/network.hpp"
#include "welfare/preprocess/sampling.hpp"

namespace welfare::modeling {

struct EpochLog {
  int epoch = 0;
  double train_loss = 0;
  double valid_loss = 0;
  std::map<std::string, double> metric_values;  // NaN marks an undefined metric
  double wall_time_s = 0;
};

inline nlohmann::json to_json(const EpochLog& e) {
  nlohmann::json m = nlohmann::json::object();
  for (const auto& [k, v] : e.metric_values) m[k] = std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
  return {{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"valid_loss", e.valid_loss},
          {"metrics", m},     {"wall_time_s", e.wall_time_s}};
}

struct TrainResult {
  ModelCheckpoint checkpoint;
  std::vector<EpochLog> logs;
  // Before any update: validation metrics and mean train loss.
  std::map<std::string, double> initial_valid_metrics;
  double initial_train_loss = 0;
};

using EpochCallback = std::function<void(const EpochLog&)>;

struct Prediction {
  double value = 0;        // regression: log consumption
  double probability = 0;  // classification: P(extreme poverty)
  int label = 0;           // classification: probability >= 0.5
};

namespace detail {

struct Outputs {
  std::vector<double> values;  // regression predictions (original units) or P(class 1)
  double mean_loss = 0;
};

inline std::array<double, 2> softmax2(const nn::Tensor& logits) {
  const double a = logits.v[0], b = logits.v[1];
  const double m = std::max(a, b);
  const double ea = std::exp(a - m), eb = std::exp(b - m);
  return {ea / (ea + eb), eb / (ea + eb)};
}

// Loss in reporting units and d(loss)/d(output) for one sample.
inline double loss_and_grad(Task task, const nn::Tensor& out, const Sample& s, double mean, double std,
                            nn::Tensor* grad) {
  if (task == Task::kRegression) {
    const double z = out.v[0];
    const double t = (s.target - mean) / std;
    if (grad) {
      *grad = nn::Tensor(1, 1, 1);
      grad->v[0] = static_cast<float>(2.0 * (z - t));
    }
    return (z - t) * (z - t) * std * std;
  }
  const auto p = softmax2(out);
  if (grad) {
    *grad = nn::Tensor(2, 1, 1);
    grad->v[0] = static_cast<float>(p[0] - (s.label == 0 ? 1.0 : 0.0));
    grad->v[1] = static_cast<float>(p[1] - (s.label == 1 ? 1.0 : 0.0));
  }
  return -std::log(std::max(p[static_cast<std::size_t>(s.label)], 1e-12));
}

inline Outputs run_inference(nn::Network& net, Task task, const Dataset& data, double mean, double std) {
  Outputs o;
  o.values.reserve(data.size());
  double total = 0;
  for (const auto& s : data) {
    const auto out = net.forward(to_tensor(s.image));
    total += loss_and_grad(task, out, s, mean, std, nullptr);
    o.values.push_back(task == Task::kRegression ? out.v[0] * std + mean : softmax2(out)[1]);
  }
  o.mean_loss = data.empty() ? 0 : total / static_cast<double>(data.size());
  return o;
}

inline double undefined_as_nan(const std::function<double()>& f) {
  try {
    return f();
  } catch (const UndefinedMetricError&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

}  // namespace detail

/// Builds the report for predictions against the dataset's ground truth.
inline MetricsReport make_report(Task task, const std::vector<double>& outputs, const Dataset& data, double beta) {
  MetricsReport r;
  r.task = task;
  r.n_valid = data.size();
  r.predictions = outputs;
  if (task == Task::kRegression) {
    for (const auto& s : data) r.targets.push_back(s.target);
    const metrics::RegressionPairs pairs(r.predictions, r.targets);
    r.metrics["rmse"] = metrics::rmse(pairs);
    r.metrics["r2_score"] = detail::undefined_as_nan([&] { return metrics::r_squared(pairs); });
    r.metrics["mse"] = metrics::sum_squared_error(pairs) / static_cast<double>(pairs.size());
    return r;
  }
  std::vector<int> labels, preds;
  for (std::size_t i = 0; i < data.size(); ++i) {
    labels.push_back(data[i].label);
    preds.push_back(outputs[i] >= 0.5 ? 1 : 0);
    r.targets.push_back(data[i].label);
  }
  const auto cm = metrics::confusion(labels, preds);
  r.confusion = cm;
  r.metrics["accuracy"] = metrics::accuracy(cm);
  const double p = detail::undefined_as_nan([&] { return metrics::precision(cm); });
  const double rc = detail::undefined_as_nan([&] { return metrics::recall(cm); });
  r.metrics["precision_score"] = p;
  r.metrics["recall_score"] = rc;
  r.metrics["fbeta_score"] =
      (std::isnan(p) || std::isnan(rc)) ? std::numeric_limits<double>::quiet_NaN()
                                        : detail::undefined_as_nan([&] { return metrics::fbeta(p, rc, beta); });
  return r;
}

namespace detail {

inline void check_inputs(const Dataset& train, const Dataset& valid, const TrainConfig& config) {
  config.validate();
  if (train.empty()) throw PreconditionError("training set is empty");
  if (valid.empty()) throw PreconditionError("validation set is empty");
  for (const Dataset* d : {&train, &valid})
    for (const auto& s : *d)
      if (s.image.rows != config.input_px || s.image.cols != config.input_px || s.image.type() != CV_8UC3)
        throw PreconditionError("sample " + s.id + " is not an 8-bit BGR image of input_px");
  for (const Dataset* d : {&train, &valid})
    for (const auto& s : *d)
      if (!std::isfinite(s.target)) throw PreconditionError("sample " + s.id + " has a non-finite target");
  if (config.task == Task::kClassification) {
    for (const auto* d : {&train, &valid}) {
      bool has0 = false, has1 = false;
      for (const auto& s : *d) {
        if (s.label != 0 && s.label != 1) throw PreconditionError("classification labels must be 0 or 1");
        has0 |= s.label == 0;
        has1 |= s.label == 1;
      }
      if (!has0 || !has1)
        throw PreconditionError(std::string(d == &train ? "train" : "valid") + " split contains a single class");
    }
  }
}

// Higher is better.
inline double selection_score(Task task, const std::map<std::string, double>& m) {
  if (task == Task::kRegression) return -m.at("rmse");
  const double f = m.at("fbeta_score");
  return std::isnan(f) ? -1.0 + m.at("accuracy") * 1e-3 : f;
}

inline TrainResult train(const Dataset& train, const Dataset& valid, const TrainConfig& config,
                         const EpochCallback& on_epoch) {
  check_inputs(train, valid, config);
  const Task task = config.task;
  nn::Network net(config.arch(), config.seed);
  if (config.backbone_weights) {
    const auto donor = load_checkpoint(*config.backbone_weights).build_network();
    const auto n = net.load_backbone_from(donor.named_weights());
    spdlog::info("transferred {} backbone tensors from {}", n, *config.backbone_weights);
  }

  double mean = 0, std = 1;
  if (task == Task::kRegression) {
    for (const auto& s : train) mean += s.target;
    mean /= static_cast<double>(train.size());
    double var = 0;
    for (const auto& s : train) var += (s.target - mean) * (s.target - mean);
    std = std::sqrt(var / static_cast<double>(train.size()));
    if (!(std > 1e-8)) std = 1.0;
  }

  TrainResult result;
  {
    const auto v = run_inference(net, task, valid, mean, std);
    result.initial_valid_metrics = make_report(task, v.values, valid, config.beta).metrics;
    result.initial_train_loss = run_inference(net, task, train, mean, std).mean_loss;
  }

  const long batches_per_epoch =
      static_cast<long>((train.size() + static_cast<std::size_t>(config.batch_size) - 1) / config.batch_size);
  const nn::OneCycle schedule{config.learning_rate, batches_per_epoch * config.epochs};
  nn::Adam opt(net.params(), 0.9, 0.99, 1e-8, config.weight_decay);
  std::mt19937_64 aug_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  double best_score = -std::numeric_limits<double>::infinity();
  std::vector<float> best_weights = net.flat_weights();
  int best_epoch = 0;
  long step = 0;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    preprocess::seeded_shuffle(order, config.seed + static_cast<std::uint64_t>(epoch));
    double epoch_loss = 0;
    for (long b = 0; b < batches_per_epoch; ++b) {
      const std::size_t begin = static_cast<std::size_t>(b) * config.batch_size;
      const std::size_t end = std::min(train.size(), begin + static_cast<std::size_t>(config.batch_size));
      net.zero_grad();
      for (std::size_t i = begin; i < end; ++i) {
        const Sample& s = train[order[i]];
        nn::Tensor x = to_tensor(s.image);
        if (config.augmentation == Augmentation::kFlipsCrops) x = augment(x, aug_rng);
        const auto out = net.forward(x);
        nn::Tensor grad;
        const double loss = loss_and_grad(task, out, s, mean, std, &grad);
        if (!std::isfinite(loss))
          throw NonFiniteLossError(fmt::format("non-finite loss at epoch {}, batch {}, sample {} (lr {:.3g})", epoch,
                                               b, s.id, schedule.at(step)));
        epoch_loss += loss;
        net.backward(grad);
      }
      opt.step(schedule.at(step++), static_cast<double>(end - begin));
    }

    EpochLog log;
    log.epoch = epoch;
    log.train_loss = epoch_loss / static_cast<double>(train.size());
    const auto v = run_inference(net, task, valid, mean, std);
    log.valid_loss = v.mean_loss;
    if (!std::isfinite(log.valid_loss) ||
        std::any_of(v.values.begin(), v.values.end(), [](double x) { return !std::isfinite(x); }))
      throw NonFiniteLossError(fmt::format("non-finite validation loss/predictions at epoch {}", epoch));
    log.metric_values = make_report(task, v.values, valid, config.beta).metrics;
    log.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    if (const double score = selection_score(task, log.metric_values); score > best_score) {
      best_score = score;
      best_epoch = epoch;
      best_weights = net.flat_weights();
    }
    if (on_epoch) on_epoch(log);
    result.logs.push_back(std::move(log));
  }

  auto& ck = result.checkpoint;
  ck.task = task;
  ck.config = config;
  ck.weights = std::move(best_weights);
  ck.best_epoch = best_epoch;
  ck.created_at = ingestion::utc_timestamp();
  ck.target_mean = mean;
  ck.target_std = std;
  return result;
}

}  // namespace detail

/// Fits the log-consumption regressor. The checkpoint holds the epoch with
/// the lowest validation RMSE.
inline TrainResult train_regressor(const Dataset& train, const Dataset& valid, const TrainConfig& config,
                                   const EpochCallback& on_epoch = {}) {
  if (config.task != Task::kRegression) throw PreconditionError("train_regressor needs task=regression");
  return detail::train(train, valid, config, on_epoch);
}

/// Fits the extreme-poverty classifier. The checkpoint holds the epoch with
/// the highest validation F-beta.
inline TrainResult train_classifier(const Dataset& train, const Dataset& valid, TrainConfig config,
                                    double beta = metrics::kDefaultBeta, const EpochCallback& on_epoch = {}) {
  if (config.task != Task::kClassification) throw PreconditionError("train_classifier needs task=classification");
  config.beta = beta;
  return detail::train(train, valid, config, on_epoch);
}

inline std::vector<Prediction> predict(const ModelCheckpoint& ck, const std::vector<cv::Mat>& images) {
  std::vector<Prediction> out;
  if (images.empty()) return out;
  auto net = ck.build_network();
  for (const auto& img : images) {
    const auto y = net.forward(to_tensor(fit_to_input(img, ck.config.input_px)));
    Prediction p;
    if (ck.task == Task::kRegression) {
      p.value = y.v[0] * ck.target_std + ck.target_mean;
    } else {
      p.probability = detail::softmax2(y)[1];
      p.label = p.probability >= 0.5 ? 1 : 0;
    }
    out.push_back(p);
  }
  return out;
}

inline std::vector<double> predict_log_consumption(const ModelCheckpoint& ck, const std::vector<cv::Mat>& images) {
  if (ck.task != Task::kRegression) throw PreconditionError("checkpoint is a classifier, not a regressor");
  std::vector<double> out;
  for (const auto& p : predict(ck, images)) out.push_back(p.value);
  return out;
}

inline std::vector<Prediction> predict_poverty(const ModelCheckpoint& ck, const std::vector<cv::Mat>& images) {
  if (ck.task != Task::kClassification) throw PreconditionError("checkpoint is a regressor, not a classifier");
  return predict(ck, images);
}

inline MetricsReport evaluate(const ModelCheckpoint& ck, const Dataset& valid) {
  if (valid.empty()) throw PreconditionError("evaluate: empty validation set");
  auto net = ck.build_network();
  const auto o = detail::run_inference(net, ck.task, valid, ck.target_mean, ck.target_std);
  return make_report(ck.task, o.values, valid, ck.config.beta);
}

}  // namespace welfare::modeling
