// welfare-vision: scrape, preprocess, train, report and run recipes.
//
// Exit codes: 0 success, 2 validation error, 3 stage failure,
// 4 data unavailable.

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <fmt/format.h>

#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "welfare/orchestration/runner.hpp"

namespace fs = std::filesystem;
using namespace welfare;
using namespace welfare::orchestration;

namespace {

constexpr int kOk = 0;
constexpr int kValidation = 2;
constexpr int kStageFailure = 3;
constexpr int kDataUnavailable = 4;

struct Globals {
  std::string config_file;
  std::string data_root;
  bool verbose = false;
  bool quiet = false;

  GlobalConfig load() const {
    GlobalConfig c = config_file.empty() ? GlobalConfig{} : load_config(config_file);
    resolve_data_root(c, data_root.empty() ? std::nullopt : std::optional<fs::path>(data_root));
    return c;
  }
};

std::vector<Category> parse_categories(const std::string& csv) {
  std::vector<Category> out;
  std::size_t start = 0;
  while (start <= csv.size()) {
    const auto comma = csv.find(',', start);
    const auto tok = csv.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    if (!tok.empty()) {
      const auto c = try_parse_category(tok);
      if (!c) throw ValidationError("unknown category '" + tok + "'");
      out.push_back(*c);
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (out.empty()) throw ValidationError("--categories must name at least one category");
  return out;
}

std::string policy_dir_name(const preprocess::PovertyPolicy& p, int tile_px) {
  return fmt::format("{}-{}px", p.name(), tile_px);
}

// ---- scrape ---------------------------------------------------------------

struct ScrapeArgs {
  std::string base_url;
  std::string categories;
  std::string out;
  bool resume = true;
  int max_concurrent = 0;
  int min_interval_ms = -1;
};

int cmd_scrape(const Globals& g, const ScrapeArgs& a) {
  auto cfg = g.load();
  ingestion::ScrapeConfig sc;
  sc.base_url = a.base_url.empty() ? cfg.base_url : a.base_url;
  if (sc.base_url.empty()) throw ValidationError("scrape needs --base-url (or base_url in the config)");
  if (!a.categories.empty()) sc.categories = parse_categories(a.categories);
  if (!a.out.empty()) {
    sc.output_root = a.out;
  } else {
    if (cfg.data_root.empty()) throw ValidationError(std::string("scrape needs --out or ") + kDataRootEnv);
    sc.output_root = cfg.raw_dir();
  }
  sc.resume = a.resume;
  sc.max_concurrent = a.max_concurrent > 0 ? a.max_concurrent : cfg.max_concurrent;
  sc.min_request_interval_ms = a.min_interval_ms >= 0 ? a.min_interval_ms : cfg.min_request_interval_ms;
  try {
    sc.validate();
  } catch (const PreconditionError& e) {
    throw ValidationError(e.what());
  }
  auto fetcher = ingestion::make_fetcher(sc.base_url, sc.min_request_interval_ms);
  const auto r = ingestion::crawl(sc, *fetcher);
  fmt::print("families: {}\nassets: {}\nblobs: {}\nasset errors: {}\nrequests: {}\nmanifest: {}\nmanifest_hash: {}\n",
             r.families, r.manifest.asset_ref_count(), r.manifest.blobs().size(), r.errors.size(),
             fetcher->request_count(), (sc.output_root / ingestion::kManifestFile).string(), r.manifest.manifest_hash);
  return kOk;
}

// ---- preprocess -----------------------------------------------------------

struct PreprocessArgs {
  std::string manifest;
  std::string policy = "uniform";
  double cap = -1;
  std::optional<std::uint64_t> seed;
  int tile_px = 0;
  std::string out;
  bool no_mosaics = false;
};

int cmd_preprocess(const Globals& g, const PreprocessArgs& a) {
  auto cfg = g.load();
  const auto policy = preprocess::PovertyPolicy::parse(a.policy);
  if (a.cap > 0) cfg.cap_usd = a.cap;
  if (a.tile_px > 0) cfg.tile_px = a.tile_px;
  if (a.seed) cfg.seed = *a.seed;
  fs::path manifest_dir = a.manifest.empty() ? cfg.raw_dir() : fs::path(a.manifest);
  if (!fs::is_directory(manifest_dir)) manifest_dir = manifest_dir.parent_path();
  if (manifest_dir.empty()) throw ValidationError(std::string("preprocess needs --manifest or ") + kDataRootEnv);
  fs::path out = a.out;
  if (out.empty()) {
    if (cfg.data_root.empty()) throw ValidationError(std::string("preprocess needs --out or ") + kDataRootEnv);
    out = cfg.data_root / "datasets" / policy_dir_name(policy, cfg.tile_px);
  }
  const auto manifest = ingestion::load_manifest(manifest_dir);
  const auto res = label_dataset(cfg, manifest, manifest_dir, out, policy, !a.no_mosaics, cfg.seed);
  fmt::print("{}\ndataset: {}\n", summarize(res).dump(2), (out / preprocess::kLabeledFile).string());
  return kOk;
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  std::string task = "reg";
  std::string input = "merged";
  std::string policy = "uniform";
  std::optional<std::uint64_t> seed;
  int epochs = 0;
  int batch_size = 0;
  double lr = 0;
  int input_px = 0;
  std::string backbone;
  std::string backbone_weights;
  std::string dataset;
  std::string run_id;
  bool no_balance = false;
  double beta = metrics::kDefaultBeta;
};

int cmd_train(const Globals& g, const TrainArgs& a) {
  auto cfg = g.load();
  if (a.epochs > 0) cfg.epochs = a.epochs;
  if (a.batch_size > 0) cfg.batch_size = a.batch_size;
  if (a.lr > 0) cfg.learning_rate = a.lr;
  if (a.input_px > 0) cfg.input_px = a.input_px;
  if (!a.backbone.empty()) cfg.backbone_id = a.backbone;
  if (!a.backbone_weights.empty()) cfg.backbone_weights = a.backbone_weights;
  if (a.seed) cfg.seed = *a.seed;
  cfg.validate();
  const auto policy = preprocess::PovertyPolicy::parse(a.policy);
  const auto task = parse_task(a.task);
  const auto tc = train_config_from(cfg, task, modeling::InputMode::parse(a.input), cfg.seed, a.beta);
  try {
    tc.validate();
  } catch (const PreconditionError& e) {
    throw ValidationError(e.what());
  }
  const fs::path dataset =
      a.dataset.empty() ? cfg.data_root / "datasets" / policy_dir_name(policy, cfg.tile_px) : fs::path(a.dataset);
  const auto households = preprocess::load_labeled(dataset);

  const bool balance = task == Task::kClassification && !a.no_balance;
  const nlohmann::json ident = {{"train", nlohmann::json(tc)},
                                {"dataset", fs::weakly_canonical(dataset).string()},
                                {"balance", balance}};
  const auto hash = sha256_hex(ident.dump());
  const auto run_id = a.run_id.empty() ? fmt::format("train-{}-{}", task == Task::kRegression ? "reg" : "clf", hash.substr(0, 12)) : a.run_id;
  const modeling::RunDir rd(cfg.data_root, run_id);
  const auto lock = rd.lock();
  const RunRegistry registry(cfg.registry_path());
  RunRegistryEntry entry{run_id, "train", hash, RunStatus::kRunning, {}, {}, "", "", "", ingestion::utc_timestamp()};
  registry.append(entry);
  const auto t0 = std::chrono::steady_clock::now();
  try {
    const auto report = train_into(rd, households, tc, balance);
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    entry.status = RunStatus::kDone;
    entry.stages = {{"train", "done", s}};
    for (const auto* f : {"config.json", "epochs.jsonl", "checkpoint.bin", "report.json", "pairs.csv"})
      entry.artifacts[f] = f;
    entry.updated_at = ingestion::utc_timestamp();
    registry.append(entry);
    fmt::print("run_id: {}\nrun_dir: {}\n", run_id, rd.path().string());
    for (const auto& [k, v] : report.metrics) fmt::print("{}: {:.6f}\n", k, v);
    return kOk;
  } catch (const std::exception& e) {
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    entry.status = RunStatus::kFailed;
    entry.stages = {{"train", "failed", s}};
    entry.failed_stage = "train";
    entry.diagnostics = e.what();
    entry.error_kind = dynamic_cast<const DataUnavailableError*>(&e) ? "data_unavailable" : "stage_failure";
    entry.updated_at = ingestion::utc_timestamp();
    registry.append(entry);
    throw;
  }
}

// ---- report ---------------------------------------------------------------

struct ReportArgs {
  std::string kind;
  std::vector<std::string> runs;
  std::string out;
  bool normalized = false;
};

std::string table_row_name(const modeling::RunDir& rd) {
  const auto input = rd.read_config().input;
  return input.kind == modeling::InputMode::Kind::kCategory ? std::string(slug(input.category)) : input.str();
}

std::string hash_of_run(const GlobalConfig& cfg, const std::string& run_id) {
  try {
    return RunRegistry(cfg.registry_path()).show_run(run_id).config_hash;
  } catch (const RunNotFoundError&) {
    return {};
  }
}

int cmd_report(const Globals& g, const ReportArgs& a) {
  const auto cfg = g.load();
  cfg.validate();
  if (a.runs.empty()) throw ValidationError("report needs --run");
  if (a.kind != "table" && a.runs.size() != 1) throw ValidationError(a.kind + " takes exactly one --run");
  auto dir_of = [&](const std::string& id) {
    modeling::RunDir rd(cfg.data_root, id);
    if (!fs::exists(rd.report_path())) throw DataUnavailableError("run '" + id + "' has no report.json");
    return rd;
  };
  if (a.kind == "scatter") {
    const auto rd = dir_of(a.runs[0]);
    const auto report = rd.read_report();
    if (report.task != Task::kRegression) throw ValidationError("scatter needs a regression run");
    reporting::render_scatter(report, a.out, {a.runs[0], a.runs[0], hash_of_run(cfg, a.runs[0])});
  } else if (a.kind == "confusion") {
    const auto rd = dir_of(a.runs[0]);
    const auto report = rd.read_report();
    if (!report.confusion) throw ValidationError("confusion needs a classification run");
    reporting::render_confusion(*report.confusion, a.normalized, a.out,
                                {a.runs[0], a.runs[0], hash_of_run(cfg, a.runs[0])});
  } else {
    std::map<std::string, MetricsReport> reports;
    for (const auto& id : a.runs) {
      const auto rd = dir_of(id);
      const auto report = rd.read_report();
      if (report.task != Task::kRegression) throw ValidationError("table rows must be regression runs: " + id);
      reports[table_row_name(rd)] = report;
    }
    reporting::render_category_table(reports, a.out);
    std::cout << ingestion::read_text(a.out);
  }
  fmt::print(stderr, "wrote {}\n", a.out);
  return kOk;
}

// ---- recipes and registry ---------------------------------------------------

int cmd_run_recipe(const Globals& g, const std::string& name, bool list) {
  if (list) {
    for (const auto& r : builtin_recipes()) {
      std::string stages;
      for (const auto& s : r.stages) stages += (stages.empty() ? "" : " > ") + s.name;
      fmt::print("{:<24} {}\n", r.name, stages);
    }
    return kOk;
  }
  if (name.empty()) throw ValidationError("run-recipe needs a recipe name (see --list)");
  const auto recipe = find_recipe(name);
  const auto cfg = g.load();
  const auto e = run_recipe(recipe, cfg);
  fmt::print("{}\n", nlohmann::json(e).dump(2));
  if (e.status == RunStatus::kDone) return kOk;
  return e.error_kind == "data_unavailable" ? kDataUnavailable : kStageFailure;
}

int cmd_list_runs(const Globals& g) {
  const auto cfg = g.load();
  cfg.validate();
  const auto runs = RunRegistry(cfg.registry_path()).list_runs();
  if (runs.empty()) {
    fmt::print("no runs\n");
    return kOk;
  }
  fmt::print("{:<40} {:<8} {:<24} {}\n", "run_id", "status", "recipe", "updated_at");
  for (const auto& r : runs) fmt::print("{:<40} {:<8} {:<24} {}\n", r.run_id, to_string(r.status), r.recipe, r.updated_at);
  return kOk;
}

int cmd_show_run(const Globals& g, const std::string& id) {
  const auto cfg = g.load();
  cfg.validate();
  const auto e = RunRegistry(cfg.registry_path()).show_run(id);
  fmt::print("run_id: {}\nrecipe: {}\nconfig_hash: {}\nstatus: {}\n", e.run_id, e.recipe, e.config_hash,
             to_string(e.status));
  if (!e.failed_stage.empty()) fmt::print("failed_stage: {}\ndiagnostics: {}\n", e.failed_stage, e.diagnostics);
  fmt::print("stages:\n");
  for (const auto& s : e.stages) fmt::print("  {:<24} {:<8} {:>10.2f}s\n", s.name, s.status, s.seconds);
  fmt::print("artifacts:\n");
  for (const auto& [k, v] : e.artifacts) fmt::print("  {}\n", v);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Estimate household welfare from photos of the home."};
  app.name("welfare-vision");
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_file, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--data-root", g.data_root, std::string("Data root (default: $") + kDataRootEnv + ")");
  app.add_flag("-v,--verbose", g.verbose, "Debug logging");
  app.add_flag("-q,--quiet", g.quiet, "Only log warnings and errors");

  ScrapeArgs sa;
  auto* scrape = app.add_subcommand("scrape", "Crawl a Dollar-Street-like site or fixture mirror");
  scrape->add_option("--base-url", sa.base_url, "Site root (http://, https:// or file://)");
  scrape->add_option("--categories", sa.categories, "Comma-separated category slugs (default: all seven)");
  scrape->add_option("--out", sa.out, "Output root (default: $WEALTH_DATA_ROOT/raw)");
  scrape->add_flag("--resume,!--no-resume", sa.resume, "Reuse files already downloaded (default on)");
  scrape->add_option("--max-concurrent", sa.max_concurrent, "Parallel downloads")->check(CLI::PositiveNumber);
  scrape->add_option("--min-interval-ms", sa.min_interval_ms, "Minimum gap between requests to one host")
      ->check(CLI::NonNegativeNumber);

  PreprocessArgs pa;
  std::uint64_t pa_seed = 0;
  auto* prep = app.add_subcommand("preprocess", "Filter, label, build mosaics and split");
  prep->add_option("--manifest", pa.manifest, "manifest.jsonl or its directory");
  prep->add_option("--policy", pa.policy, "uniform | by-group")->check(CLI::IsMember({"uniform", "by-group"}));
  prep->add_option("--cap", pa.cap, "Outlier cap in USD/month (default 5000)")->check(CLI::PositiveNumber);
  auto* pa_seed_opt = prep->add_option("--seed", pa_seed, "Split seed");
  prep->add_option("--tile-px", pa.tile_px, "Mosaic tile size (default 224)")->check(CLI::PositiveNumber);
  prep->add_option("--out", pa.out, "Output directory (default: $WEALTH_DATA_ROOT/datasets/<policy>-<tile>px)");
  prep->add_flag("--no-mosaics", pa.no_mosaics, "Skip writing mosaics");

  TrainArgs ta;
  std::uint64_t ta_seed = 0;
  auto* train = app.add_subcommand("train", "Train a regressor or classifier");
  train->add_option("--task", ta.task, "reg | clf")->check(CLI::IsMember({"reg", "clf", "regression", "classification"}));
  train->add_option("--input", ta.input, "merged | pooled | category:<slug>");
  train->add_option("--policy", ta.policy, "Labeling policy of the dataset")->check(CLI::IsMember({"uniform", "by-group"}));
  auto* ta_seed_opt = train->add_option("--seed", ta_seed, "Seed");
  train->add_option("--epochs", ta.epochs, "Epochs")->check(CLI::PositiveNumber);
  train->add_option("--batch-size", ta.batch_size, "Batch size")->check(CLI::PositiveNumber);
  train->add_option("--lr", ta.lr, "Peak learning rate")->check(CLI::PositiveNumber);
  train->add_option("--input-px", ta.input_px, "Input size")->check(CLI::PositiveNumber);
  train->add_option("--backbone", ta.backbone, "resnet-mini | resnet-small");
  train->add_option("--backbone-weights", ta.backbone_weights, "Checkpoint to initialise the backbone from");
  train->add_option("--dataset", ta.dataset, "Labeled dataset directory");
  train->add_option("--run-id", ta.run_id, "Run id (default derived from the config)");
  train->add_flag("--no-balance", ta.no_balance, "Classification: skip undersampling");
  train->add_option("--beta", ta.beta, "F-beta weight (default 0.8)")->check(CLI::PositiveNumber);

  ReportArgs ra;
  auto* report = app.add_subcommand("report", "Render figures and tables from runs");
  report->add_option("kind", ra.kind, "scatter | confusion | table")
      ->required()
      ->check(CLI::IsMember({"scatter", "confusion", "table"}));
  report->add_option("--run", ra.runs, "Run id (repeat for table)")->required();
  report->add_option("--out", ra.out, "Output file")->required();
  report->add_flag("--normalized", ra.normalized, "Row-normalize the confusion matrix");

  std::string recipe_name;
  bool list_recipes = false;
  auto* rr = app.add_subcommand("run-recipe", "Run or resume a built-in experiment");
  rr->add_option("name", recipe_name, "Recipe name");
  rr->add_flag("--list", list_recipes, "List built-in recipes");

  auto* lr = app.add_subcommand("list-runs", "List registered runs");
  std::string show_id;
  auto* sr = app.add_subcommand("show-run", "Show one run with per-stage timing");
  sr->add_option("run_id", show_id, "Run id")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidation;
  }

  auto logger = spdlog::stderr_color_mt("welfare-vision");
  spdlog::set_default_logger(logger);
  spdlog::set_level(g.verbose ? spdlog::level::debug : g.quiet ? spdlog::level::warn : spdlog::level::info);

  try {
    if (*scrape) return cmd_scrape(g, sa);
    if (*prep) {
      if (*pa_seed_opt) pa.seed = pa_seed;
      return cmd_preprocess(g, pa);
    }
    if (*train) {
      if (*ta_seed_opt) ta.seed = ta_seed;
      return cmd_train(g, ta);
    }
    if (*report) return cmd_report(g, ra);
    if (*rr) return cmd_run_recipe(g, recipe_name, list_recipes);
    if (*lr) return cmd_list_runs(g);
    if (*sr) return cmd_show_run(g, show_id);
  } catch (const DataUnavailableError& e) {
    spdlog::error("{}", e.what());
    return kDataUnavailable;
  } catch (const NetworkError& e) {
    spdlog::error("{}", e.what());
    return kDataUnavailable;
  } catch (const PreconditionError& e) {
    spdlog::error("{}", e.what());
    return kValidation;
  } catch (const welfare::ParseError& e) {
    spdlog::error("{}", e.what());
    return kValidation;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kStageFailure;
  }
  return kValidation;
}
