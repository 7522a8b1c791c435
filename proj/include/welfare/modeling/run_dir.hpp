#pragma once

// Layout of one training run:
//   {root}/runs/{run_id}/config.json  epochs.jsonl  checkpoint.bin  report.json  pairs.csv
// A run directory has a single writer, enforced by an flock on .lock.

#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "welfare/file_lock.hpp"
#include "welfare/metrics_report.hpp"
#include "welfare/modeling/checkpoint.hpp"
#include "welfare/modeling/trainer.hpp"

namespace welfare::modeling {

class RunDir {
 public:
  RunDir(const std::filesystem::path& root, const std::string& run_id) : dir_(root / "runs" / run_id) {}

  const std::filesystem::path& path() const { return dir_; }
  std::filesystem::path config_path() const { return dir_ / "config.json"; }
  std::filesystem::path epochs_path() const { return dir_ / "epochs.jsonl"; }
  std::filesystem::path checkpoint_path() const { return dir_ / "checkpoint.bin"; }
  std::filesystem::path report_path() const { return dir_ / "report.json"; }

  /// Takes the writer lock; throws LockHeldError if another writer has it.
  FileLock lock() const {
    std::filesystem::create_directories(dir_);
    return FileLock(dir_ / ".lock", FileLock::Mode::kTry);
  }

  void write_config(const TrainConfig& c) const {
    std::filesystem::create_directories(dir_);
    std::ofstream(config_path()) << nlohmann::json(c).dump(2) << "\n";
  }
  void write_epochs(const std::vector<EpochLog>& logs) const {
    std::ofstream out(epochs_path(), std::ios::trunc);
    for (const auto& e : logs) out << to_json(e).dump() << "\n";
  }
  void append_epoch(const EpochLog& e) const { std::ofstream(epochs_path(), std::ios::app) << to_json(e).dump() << "\n"; }
  void write_checkpoint(const ModelCheckpoint& ck) const { save_checkpoint(ck, checkpoint_path()); }
  void write_report(const MetricsReport& r) const { save_report(r, report_path()); }

  TrainConfig read_config() const {
    std::ifstream in(config_path());
    if (!in) throw DataUnavailableError("run has no config: " + dir_.string());
    return nlohmann::json::parse(in).get<TrainConfig>();
  }
  ModelCheckpoint read_checkpoint() const { return load_checkpoint(checkpoint_path()); }
  MetricsReport read_report() const { return load_report(report_path()); }

 private:
  std::filesystem::path dir_;
};

}  // namespace welfare::modeling
