#pragma once

// Append-only run registry: {data_root}/registry.jsonl. Each line wraps an
// entry with the previous line's hash and its own,
//   hash = sha256(prev_hash + entry.dump())
// so any edit to an earlier line breaks the chain. Appends hold an flock.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "welfare/error.hpp"
#include "welfare/file_lock.hpp"
#include "welfare/hash.hpp"
#include "welfare/ingestion/manifest.hpp"

namespace welfare::orchestration {

enum class RunStatus { kPending, kRunning, kDone, kFailed };

inline std::string to_string(RunStatus s) {
  switch (s) {
    case RunStatus::kPending: return "pending";
    case RunStatus::kRunning: return "running";
    case RunStatus::kDone: return "done";
    default: return "failed";
  }
}

inline RunStatus parse_status(const std::string& s) {
  if (s == "pending") return RunStatus::kPending;
  if (s == "running") return RunStatus::kRunning;
  if (s == "done") return RunStatus::kDone;
  if (s == "failed") return RunStatus::kFailed;
  throw ParseError("unknown run status '" + s + "'", 0);
}

struct StageTiming {
  std::string name;
  std::string status;  // done, skipped (resumed), failed
  double seconds = 0;

  bool operator==(const StageTiming&) const = default;
};

struct RunRegistryEntry {
  std::string run_id;
  std::string recipe;
  std::string config_hash;
  RunStatus status = RunStatus::kPending;
  std::map<std::string, std::string> artifacts;  // name -> path relative to the run dir
  std::vector<StageTiming> stages;
  std::string failed_stage;
  std::string diagnostics;
  std::string error_kind;  // "stage_failure" or "data_unavailable" when failed
  std::string updated_at;

  bool operator==(const RunRegistryEntry&) const = default;
};

inline void to_json(nlohmann::json& j, const StageTiming& t) {
  j = {{"name", t.name}, {"status", t.status}, {"seconds", t.seconds}};
}
inline void from_json(const nlohmann::json& j, StageTiming& t) {
  t.name = j.at("name");
  t.status = j.at("status");
  t.seconds = j.at("seconds");
}

inline void to_json(nlohmann::json& j, const RunRegistryEntry& e) {
  j = {{"run_id", e.run_id},           {"recipe", e.recipe},       {"config_hash", e.config_hash},
       {"status", to_string(e.status)}, {"artifacts", e.artifacts}, {"stages", e.stages},
       {"failed_stage", e.failed_stage}, {"diagnostics", e.diagnostics}, {"error_kind", e.error_kind},
       {"updated_at", e.updated_at}};
}
inline void from_json(const nlohmann::json& j, RunRegistryEntry& e) {
  e.run_id = j.at("run_id");
  e.recipe = j.at("recipe");
  e.config_hash = j.at("config_hash");
  e.status = parse_status(j.at("status"));
  e.artifacts = j.at("artifacts").get<std::map<std::string, std::string>>();
  e.stages = j.at("stages").get<std::vector<StageTiming>>();
  e.failed_stage = j.value("failed_stage", "");
  e.diagnostics = j.value("diagnostics", "");
  e.error_kind = j.value("error_kind", "");
  e.updated_at = j.value("updated_at", "");
}

class RunNotFoundError : public PreconditionError {
 public:
  using PreconditionError::PreconditionError;
};

class RunRegistry {
 public:
  static inline const std::string kGenesis = std::string(64, '0');

  explicit RunRegistry(std::filesystem::path file) : file_(std::move(file)) {}

  const std::filesystem::path& path() const { return file_; }

  /// Every line in order, after verifying the hash chain.
  std::vector<RunRegistryEntry> entries() const {
    std::vector<RunRegistryEntry> out;
    read_chain(&out);
    return out;
  }

  void append(const RunRegistryEntry& e) const {
    if (file_.has_parent_path()) std::filesystem::create_directories(file_.parent_path());
    FileLock lock(lock_path(), FileLock::Mode::kWait);
    const auto prev = read_chain(nullptr);
    const auto body = nlohmann::json(e);
    const nlohmann::json line = {{"entry", body}, {"prev", prev}, {"hash", link_hash(prev, body)}};
    std::ofstream out(file_, std::ios::app | std::ios::binary);
    if (!out) throw Error("cannot append to registry " + file_.string());
    out << line.dump() << "\n";
  }

  /// Latest state of each run, in order of first registration.
  std::vector<RunRegistryEntry> list_runs() const {
    std::vector<RunRegistryEntry> out;
    std::map<std::string, std::size_t> where;
    for (auto& e : entries()) {
      if (auto it = where.find(e.run_id); it != where.end()) {
        out[it->second] = std::move(e);
      } else {
        where.emplace(e.run_id, out.size());
        out.push_back(std::move(e));
      }
    }
    return out;
  }

  RunRegistryEntry show_run(const std::string& run_id) const {
    const auto all = entries();
    for (auto it = all.rbegin(); it != all.rend(); ++it)
      if (it->run_id == run_id) return *it;
    throw RunNotFoundError("unknown run_id '" + run_id + "'");
  }

 private:
  std::filesystem::path lock_path() const { return file_.string() + ".lock"; }

  static std::string link_hash(const std::string& prev, const nlohmann::json& body) {
    return sha256_hex(prev + body.dump());
  }

  // Returns the last hash in the chain (genesis for an empty registry).
  std::string read_chain(std::vector<RunRegistryEntry>* out) const {
    std::string prev = kGenesis;
    if (!std::filesystem::exists(file_)) return prev;
    std::istringstream in(ingestion::read_text(file_));
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      const auto where = file_.string() + ":" + std::to_string(lineno);
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
        if (j.at("prev").get<std::string>() != prev) throw IntegrityError(where + ": broken hash chain");
        if (j.at("hash").get<std::string>() != link_hash(prev, j.at("entry")))
          throw IntegrityError(where + ": entry hash mismatch");
        if (out) out->push_back(j.at("entry").get<RunRegistryEntry>());
      } catch (const nlohmann::json::exception& e) {
        throw IntegrityError(where + ": unreadable registry line (" + e.what() + ")");
      } catch (const ParseError& e) {
        throw IntegrityError(where + ": " + e.what());
      }
      prev = j.at("hash").get<std::string>();
    }
    return prev;
  }

  std::filesystem::path file_;
};

}  // namespace welfare::orchestration
