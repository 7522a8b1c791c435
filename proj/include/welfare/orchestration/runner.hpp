#pragma once

// Executes recipes. A run lives in {data_root}/runs/{run_id}; its stage log
// (stages.jsonl) records start/done/failed events so a re-run with the same
// config hash skips every stage up to the last completed one.

#include <spdlog/spdlog.h>

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "welfare/ingestion/scraper.hpp"
#include "welfare/modeling/run_dir.hpp"
#include "welfare/modeling/trainer.hpp"
#include "welfare/orchestration/config.hpp"
#include "welfare/orchestration/recipe.hpp"
#include "welfare/orchestration/registry.hpp"
#include "welfare/preprocess/dataset.hpp"
#include "welfare/reporting/render.hpp"

namespace welfare::orchestration {

inline constexpr const char* kStageLogFile = "stages.jsonl";
inline constexpr const char* kDatasetDir = "dataset";
inline constexpr const char* kFiguresDir = "figures";

// ---- stage bodies, also used directly by the CLI --------------------------

/// Ensures a verified manifest exists under the configured raw directory,
/// scraping base_url when there is none yet.
inline ingestion::DatasetManifest acquire_manifest(const GlobalConfig& cfg) {
  const auto dir = cfg.raw_dir();
  if (std::filesystem::exists(dir / ingestion::kManifestFile)) return ingestion::load_manifest(dir);
  if (cfg.base_url.empty())
    throw DataUnavailableError("no manifest in " + dir.string() + " and no base_url configured to scrape one");
  ingestion::ScrapeConfig sc;
  sc.base_url = cfg.base_url;
  sc.output_root = dir;
  sc.max_concurrent = cfg.max_concurrent;
  sc.min_request_interval_ms = cfg.min_request_interval_ms;
  auto fetcher = ingestion::make_fetcher(sc.base_url, sc.min_request_interval_ms);
  auto result = ingestion::crawl(sc, *fetcher);
  spdlog::info("scraped {} families, {} assets, {} asset errors", result.families,
               result.manifest.asset_ref_count(), result.errors.size());
  return result.manifest;
}

inline nlohmann::json summarize(const preprocess::PreprocessResult& r) {
  nlohmann::json counts = nlohmann::json::object();
  for (std::size_t i = 0; i < kCategoryCount; ++i) counts[std::string(kCategorySlugs[i])] = r.category_counts[i];
  return {{"households_in", r.households_in},  {"households_kept", r.households_kept},
          {"category_counts", counts},         {"mosaics", r.mosaic_count},
          {"positives", r.positives}};
}

inline preprocess::PreprocessResult label_dataset(const GlobalConfig& cfg, const ingestion::DatasetManifest& manifest,
                                                  const std::filesystem::path& manifest_dir,
                                                  const std::filesystem::path& out_dir,
                                                  const preprocess::PovertyPolicy& policy, bool mosaics,
                                                  std::uint64_t seed) {
  const auto table = preprocess::IncomeGroupTable::load(cfg.income_groups_file);
  preprocess::PreprocessOptions opt;
  opt.policy = policy;
  opt.cap_usd = cfg.cap_usd;
  opt.seed = seed;
  opt.mosaic.tile_px = cfg.tile_px;
  opt.write_mosaics = mosaics;
  opt.workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  auto res = preprocess::run_preprocess(manifest, manifest_dir, out_dir, table, opt);
  preprocess::write_labeled(out_dir, res.households);
  const auto summary = summarize(res);
  ingestion::write_text_atomic(out_dir / "summary.json", summary.dump(2) + "\n");
  spdlog::info("preprocess ({}): {} households in, {} kept, {} positive; category counts {}", policy.name(),
               res.households_in, res.households_kept, res.positives, summary["category_counts"].dump());
  return res;
}

inline modeling::TrainConfig train_config_from(const GlobalConfig& cfg, Task task, const modeling::InputMode& input,
                                               std::uint64_t seed, double beta = metrics::kDefaultBeta) {
  modeling::TrainConfig tc;
  tc.task = task;
  tc.input = input;
  tc.backbone_id = cfg.backbone_id;
  tc.input_px = cfg.input_px;
  tc.epochs = cfg.epochs;
  tc.batch_size = cfg.batch_size;
  tc.learning_rate = cfg.learning_rate;
  tc.weight_decay = cfg.weight_decay;
  tc.seed = seed;
  tc.beta = beta;
  tc.augmentation = modeling::TrainConfig::default_augmentation(input);
  tc.backbone_weights = cfg.backbone_weights;
  return tc;
}

struct TrainingSets {
  modeling::Dataset train;
  modeling::Dataset valid;
};

/// Regression honours the household split stored with the dataset.
/// Balanced classification undersamples the samples, then splits them 80/20.
inline TrainingSets make_training_sets(const std::vector<preprocess::LabeledHousehold>& households,
                                      const modeling::TrainConfig& tc, bool balance) {
  TrainingSets sets;
  if (tc.task == Task::kClassification && balance) {
    const auto all = modeling::build_samples(households, tc.input, tc.input_px);
    const auto balanced = preprocess::balance_classes(all, [](const modeling::Sample& s) { return s.label; }, tc.seed);
    auto split = preprocess::split_dataset(balanced, preprocess::SplitSpec{0.8, tc.seed, false});
    sets.train = std::move(split.train);
    sets.valid = std::move(split.valid);
    spdlog::info("balanced {} samples to {} ({} train / {} valid)", all.size(), balanced.size(), sets.train.size(),
                 sets.valid.size());
    return sets;
  }
  std::vector<preprocess::LabeledHousehold> tr, va;
  for (const auto& h : households) (h.split == preprocess::SplitAssignment::kValid ? va : tr).push_back(h);
  sets.train = modeling::build_samples(tr, tc.input, tc.input_px);
  sets.valid = modeling::build_samples(va, tc.input, tc.input_px);
  return sets;
}

/// Trains into a run directory: config.json, epochs.jsonl (one line per
/// epoch as it finishes), checkpoint.bin, report.json and pairs.csv.
inline MetricsReport train_into(const modeling::RunDir& rd, const std::vector<preprocess::LabeledHousehold>& households,
                                const modeling::TrainConfig& tc, bool balance) {
  tc.validate();
  const auto sets = make_training_sets(households, tc, balance);
  if (sets.train.empty() || sets.valid.empty())
    throw DataUnavailableError("no " + tc.input.str() + " samples for " +
                               std::string(sets.train.empty() ? "training" : "validation"));
  rd.write_config(tc);
  rd.write_epochs({});
  auto on_epoch = [&](const modeling::EpochLog& e) {
    rd.append_epoch(e);
    spdlog::info("epoch {:>3}  train_loss {:.6f}  valid_loss {:.6f}  {:.1f}s", e.epoch, e.train_loss, e.valid_loss,
                 e.wall_time_s);
  };
  const auto result = tc.task == Task::kRegression
                          ? modeling::train_regressor(sets.train, sets.valid, tc, on_epoch)
                          : modeling::train_classifier(sets.train, sets.valid, tc, tc.beta, on_epoch);
  rd.write_checkpoint(result.checkpoint);
  auto report = modeling::evaluate(result.checkpoint, sets.valid);
  rd.write_report(report);
  return report;
}

// ---- recipe execution ------------------------------------------------------

struct RunOptions {
  // Called before a stage executes (not for resumed stages).
  std::function<void(const Stage&, std::size_t)> before_stage;
};

namespace detail {

struct StageContext {
  const GlobalConfig& config;
  const ExperimentRecipe& recipe;
  const std::string& run_id;
  const std::string& hash;
  std::filesystem::path run_dir;
  std::uint64_t seed;
  std::map<std::string, std::string>& artifacts;
};

inline std::string rel(const StageContext& ctx, const std::filesystem::path& p) {
  return preprocess::relative_to(p, ctx.run_dir);
}

inline void run_stage(const Stage& s, StageContext& ctx) {
  const auto& p = s.params;
  const modeling::RunDir rd(ctx.config.data_root, ctx.run_id);
  if (s.op() == "ingestion.acquire") {
    acquire_manifest(ctx.config);
    ctx.artifacts["manifest"] = (ctx.config.raw_dir() / ingestion::kManifestFile).string();
  } else if (s.op() == "preprocess.label") {
    const auto raw = ctx.config.raw_dir();
    const auto manifest = ingestion::load_manifest(raw);
    const auto out = ctx.run_dir / kDatasetDir;
    label_dataset(ctx.config, manifest, raw, out, preprocess::PovertyPolicy::parse(p.value("policy", "uniform")),
                  p.value("mosaics", true), ctx.seed);
    ctx.artifacts["dataset"] = rel(ctx, out / preprocess::kLabeledFile);
  } else if (s.op() == "modeling.train") {
    const auto households = preprocess::load_labeled(ctx.run_dir / kDatasetDir);
    const auto tc = train_config_from(ctx.config, parse_task(p.value("task", "regression")),
                                      modeling::InputMode::parse(p.value("input", "merged")), ctx.seed,
                                      p.value("beta", metrics::kDefaultBeta));
    train_into(rd, households, tc, p.value("balance", false));
    ctx.artifacts["config"] = rel(ctx, rd.config_path());
    ctx.artifacts["epochs"] = rel(ctx, rd.epochs_path());
    ctx.artifacts["checkpoint"] = rel(ctx, rd.checkpoint_path());
    ctx.artifacts["report"] = rel(ctx, rd.report_path());
  } else if (s.op() == "reporting.scatter") {
    const auto out = ctx.run_dir / kFiguresDir / "scatter.png";
    reporting::render_scatter(rd.read_report(), out, {p.value("title", ctx.recipe.name), ctx.run_id, ctx.hash});
    ctx.artifacts["scatter"] = rel(ctx, out);
  } else if (s.op() == "reporting.confusion") {
    const auto report = rd.read_report();
    if (!report.confusion) throw PreconditionError("report has no confusion matrix (is it a classification run?)");
    const bool normalized = p.value("normalized", false);
    const auto name = normalized ? "confusion_normalized" : "confusion_raw";
    const auto out = ctx.run_dir / kFiguresDir / (std::string(name) + ".png");
    reporting::render_confusion(*report.confusion, normalized, out,
                                {p.value("title", ctx.recipe.name), ctx.run_id, ctx.hash});
    ctx.artifacts[name] = rel(ctx, out);
  } else {
    throw ValidationError("unknown operation " + s.op());
  }
}

struct StageEvent {
  std::string stage;
  std::string event;
  double seconds = 0;
};

inline std::vector<StageEvent> read_stage_log(const std::filesystem::path& run_dir) {
  std::vector<StageEvent> out;
  const auto file = run_dir / kStageLogFile;
  if (!std::filesystem::exists(file)) return out;
  std::istringstream in(ingestion::read_text(file));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) continue;  // torn final line after a crash
    out.push_back({j.value("stage", ""), j.value("event", ""), j.value("seconds", 0.0)});
  }
  return out;
}

inline void log_stage(const std::filesystem::path& run_dir, const Stage& s, std::size_t index, const char* event,
                      double seconds = 0) {
  const nlohmann::json j = {{"stage", s.name},  {"index", index},       {"event", event},
                            {"seconds", seconds}, {"at", ingestion::utc_timestamp()}};
  std::ofstream(run_dir / kStageLogFile, std::ios::app) << j.dump() << "\n";
}

}  // namespace detail

/// Stage-execution history of a run directory, oldest first:
/// (stage name, event) with event in {start, done, failed}.
inline std::vector<std::pair<std::string, std::string>> stage_history(const std::filesystem::path& run_dir) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& e : detail::read_stage_log(run_dir)) out.emplace_back(e.stage, e.event);
  return out;
}

/// Runs (or resumes) a recipe. Validation problems throw ValidationError
/// before anything is written. Stage failures do not throw: they yield a
/// failed entry naming the stage.
inline RunRegistryEntry run_recipe(ExperimentRecipe recipe, const GlobalConfig& config, const RunOptions& options = {}) {
  config.validate();
  validate(recipe);
  recipe.seed = config.seed;
  const auto hash = config_hash(recipe, config);
  const auto run_id = run_id_for(recipe, hash);
  const modeling::RunDir rd(config.data_root, run_id);
  const auto lock = rd.lock();
  const RunRegistry registry(config.registry_path());

  {
    const nlohmann::json doc = {{"run_id", run_id}, {"config_hash", hash}, {"recipe", recipe_to_json(recipe)},
                                {"config", config}, {"seed", recipe.seed}};
    ingestion::write_text_atomic(rd.path() / "recipe.json", doc.dump(2) + "\n");
  }

  // Resume point: the longest prefix of stages whose last event is "done".
  std::map<std::string, detail::StageEvent> last;
  for (const auto& e : detail::read_stage_log(rd.path())) last[e.stage] = e;
  std::size_t resume_from = 0;
  while (resume_from < recipe.stages.size()) {
    auto it = last.find(recipe.stages[resume_from].name);
    if (it == last.end() || it->second.event != "done") break;
    ++resume_from;
  }

  RunRegistryEntry entry;
  entry.run_id = run_id;
  entry.recipe = recipe.name;
  entry.config_hash = hash;
  entry.status = RunStatus::kRunning;
  for (std::size_t i = 0; i < resume_from; ++i)
    entry.stages.push_back({recipe.stages[i].name, "resumed", last[recipe.stages[i].name].seconds});
  entry.updated_at = ingestion::utc_timestamp();
  registry.append(entry);
  if (resume_from > 0) spdlog::info("{}: resuming after stage '{}'", run_id, recipe.stages[resume_from - 1].name);

  std::map<std::string, std::string> artifacts;
  for (std::size_t i = resume_from; i < recipe.stages.size(); ++i) {
    const auto& stage = recipe.stages[i];
    detail::StageContext ctx{config, recipe, run_id, hash, rd.path(), stage_seed(recipe.seed, i), artifacts};
    const auto t0 = std::chrono::steady_clock::now();
    auto seconds = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };
    detail::log_stage(rd.path(), stage, i, "start");
    spdlog::info("{}: stage {}/{} '{}' ({})", run_id, i + 1, recipe.stages.size(), stage.name, stage.op());
    try {
      if (options.before_stage) options.before_stage(stage, i);
      detail::run_stage(stage, ctx);
    } catch (const std::exception& e) {
      const double s = seconds();
      detail::log_stage(rd.path(), stage, i, "failed", s);
      entry.stages.push_back({stage.name, "failed", s});
      entry.status = RunStatus::kFailed;
      entry.failed_stage = stage.name;
      entry.diagnostics = e.what();
      entry.error_kind = dynamic_cast<const DataUnavailableError*>(&e) ? "data_unavailable" : "stage_failure";
      entry.updated_at = ingestion::utc_timestamp();
      spdlog::error("{}: stage '{}' failed: {}", run_id, stage.name, e.what());
      registry.append(entry);
      return entry;
    }
    const double s = seconds();
    detail::log_stage(rd.path(), stage, i, "done", s);
    entry.stages.push_back({stage.name, "done", s});
  }

  std::vector<std::string> missing;
  for (const auto& out : recipe.expected_outputs) {
    if (std::filesystem::exists(rd.path() / out))
      entry.artifacts[out] = out;
    else
      missing.push_back(out);
  }
  entry.updated_at = ingestion::utc_timestamp();
  if (!missing.empty()) {
    entry.status = RunStatus::kFailed;
    entry.failed_stage = recipe.stages.back().name;
    entry.error_kind = "stage_failure";
    entry.diagnostics = "missing expected outputs:";
    for (const auto& m : missing) entry.diagnostics += " " + m;
  } else {
    entry.status = RunStatus::kDone;
  }
  registry.append(entry);
  return entry;
}

}  // namespace welfare::orchestration
