#pragma once

// DatasetManifest: the persisted inventory of households and their image
// assets. Stored as manifest.jsonl (one household per line, sorted by
// family_id) plus a manifest.header.json sidecar carrying the content hash.

#include <array>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "welfare/category.hpp"
#include "welfare/error.hpp"
#include "welfare/hash.hpp"
#include "welfare/ingestion/filename.hpp"
#include "welfare/ingestion/types.hpp"

namespace welfare::ingestion {

inline constexpr int kManifestSchemaVersion = 1;
inline constexpr const char* kManifestFile = "manifest.jsonl";
inline constexpr const char* kManifestHeaderFile = "manifest.header.json";
inline constexpr const char* kQuarantineDir = "quarantine";
inline constexpr const char* kImagesDir = "images";

struct AssetRef {
  std::string name;  // canonical encoded filename of this asset
  std::string path;  // stored blob, relative to the manifest directory
  std::string hash;
  std::uint64_t bytes = 0;

  bool operator==(const AssetRef&) const = default;
};

struct ManifestRow {
  HouseholdMeta meta;
  std::array<std::optional<AssetRef>, kCategoryCount> assets;  // nullopt = absent
  std::vector<AssetError> errors;

  const std::optional<AssetRef>& asset(Category c) const { return assets[category_index(c)]; }
  std::size_t present_count() const {
    std::size_t n = 0;
    for (const auto& a : assets) n += a.has_value();
    return n;
  }
  bool operator==(const ManifestRow&) const = default;
};

struct DatasetManifest {
  int schema_version = kManifestSchemaVersion;
  std::string created_at;
  std::string manifest_hash;
  std::vector<ManifestRow> rows;

  std::size_t asset_ref_count() const {
    std::size_t n = 0;
    for (const auto& r : rows) n += r.present_count();
    return n;
  }
  // Unique stored blobs keyed by content hash.
  std::map<std::string, std::string> blobs() const {
    std::map<std::string, std::string> out;
    for (const auto& r : rows)
      for (const auto& a : r.assets)
        if (a) out.emplace(a->hash, a->path);
    return out;
  }
  const ManifestRow* find(const std::string& family_id) const {
    for (const auto& r : rows)
      if (r.meta.family_id == family_id) return &r;
    return nullptr;
  }
};

inline nlohmann::json row_to_json(const ManifestRow& row) {
  nlohmann::json assets = nlohmann::json::object();
  for (std::size_t i = 0; i < kCategoryCount; ++i) {
    const auto key = std::string(kCategorySlugs[i]);
    if (const auto& a = row.assets[i])
      assets[key] = {{"name", a->name}, {"path", a->path}, {"hash", a->hash}, {"bytes", a->bytes}};
    else
      assets[key] = nullptr;
  }
  nlohmann::json errors = nlohmann::json::array();
  for (const auto& e : row.errors)
    errors.push_back({{"category", std::string(slug(e.category))},
                      {"url", e.remote_url},
                      {"message", e.message},
                      {"http_status", e.http_status},
                      {"quarantined", e.quarantined}});
  return {{"family_id", row.meta.family_id},
          {"country", row.meta.country},
          {"monthly_consumption_usd", row.meta.monthly_consumption_usd},
          {"assets", std::move(assets)},
          {"errors", std::move(errors)}};
}

inline ManifestRow row_from_json(const nlohmann::json& j) {
  ManifestRow row;
  row.meta.family_id = j.at("family_id").get<std::string>();
  row.meta.country = j.at("country").get<std::string>();
  row.meta.monthly_consumption_usd = j.at("monthly_consumption_usd").get<double>();
  for (const auto& [key, value] : j.at("assets").items()) {
    const auto cat = parse_category(key);
    if (value.is_null()) continue;
    row.assets[category_index(cat)] = AssetRef{value.at("name").get<std::string>(), value.at("path").get<std::string>(),
                                               value.at("hash").get<std::string>(),
                                               value.at("bytes").get<std::uint64_t>()};
  }
  if (j.contains("errors"))
    for (const auto& e : j.at("errors"))
      row.errors.push_back(AssetError{row.meta.family_id, parse_category(e.at("category").get<std::string>()),
                                      e.at("url").get<std::string>(), e.at("message").get<std::string>(),
                                      e.value("http_status", 0), e.value("quarantined", false)});
  return row;
}

inline std::string compute_manifest_hash(const std::vector<ManifestRow>& rows) {
  Sha256 h;
  h.update(fmt::format("schema:{}\n", kManifestSchemaVersion));
  for (const auto& r : rows) h.update(row_to_json(r).dump()).update("\n");
  return h.hex();
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Groups assets under their households. Every meta yields a row (missing
/// categories are absent); assets whose content hash was already seen point
/// at the first stored blob. Throws if any asset names an unknown family.
inline DatasetManifest build_manifest(const std::vector<RawImageAsset>& assets, const std::vector<HouseholdMeta>& metas,
                                      const std::vector<AssetError>& errors = {},
                                      const std::filesystem::path& root = {}) {
  std::map<std::string, ManifestRow> by_family;
  for (const auto& m : metas) by_family[m.family_id].meta = m;

  std::set<std::string> orphans;
  for (const auto& a : assets)
    if (!by_family.contains(a.family_id)) orphans.insert(a.family_id);
  if (!orphans.empty()) {
    std::string list;
    for (const auto& o : orphans) list += (list.empty() ? "" : ", ") + o;
    throw PreconditionError("orphan assets for unknown families: " + list);
  }

  // Deterministic order regardless of download completion order.
  std::vector<const RawImageAsset*> sorted;
  for (const auto& a : assets) sorted.push_back(&a);
  std::sort(sorted.begin(), sorted.end(), [](const auto* x, const auto* y) {
    return std::tie(x->family_id, x->category) < std::tie(y->family_id, y->category);
  });

  std::map<std::string, std::string> blob_path;
  for (const auto* a : sorted) {
    auto rel = root.empty() ? a->local_path : a->local_path.lexically_relative(root);
    if (rel.empty()) rel = a->local_path;
    const auto [it, inserted] = blob_path.emplace(a->content_hash, rel.generic_string());
    auto& row = by_family[a->family_id];
    row.assets[category_index(a->category)] =
        AssetRef{encode_asset_filename(row.meta, a->category, 1), it->second, a->content_hash, a->byte_size};
  }
  for (const auto& e : errors)
    if (auto it = by_family.find(e.family_id); it != by_family.end()) it->second.errors.push_back(e);

  DatasetManifest m;
  for (auto& [_, row] : by_family) {
    std::sort(row.errors.begin(), row.errors.end(),
              [](const auto& x, const auto& y) { return std::tie(x.category, x.remote_url) < std::tie(y.category, y.remote_url); });
    m.rows.push_back(std::move(row));
  }
  m.manifest_hash = compute_manifest_hash(m.rows);
  m.created_at = utc_timestamp();
  return m;
}

inline std::string serialize_rows(const DatasetManifest& m) {
  std::string out;
  for (const auto& r : m.rows) out += row_to_json(r).dump() + "\n";
  return out;
}

inline void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp);
    out << text;
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataUnavailableError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes manifest.jsonl and its header into `dir`. If the directory already
/// holds a manifest with the same hash nothing is touched.
inline void write_manifest(const std::filesystem::path& dir, DatasetManifest& m) {
  std::filesystem::create_directories(dir);
  const auto header_path = dir / kManifestHeaderFile;
  if (std::filesystem::exists(header_path) && std::filesystem::exists(dir / kManifestFile)) {
    const auto old = nlohmann::json::parse(read_text(header_path), nullptr, false);
    if (!old.is_discarded() && old.value("manifest_hash", "") == m.manifest_hash) {
      m.created_at = old.value("created_at", m.created_at);
      return;
    }
  }
  write_text_atomic(dir / kManifestFile, serialize_rows(m));
  const nlohmann::json header = {
      {"schema_version", m.schema_version}, {"created_at", m.created_at}, {"manifest_hash", m.manifest_hash}};
  write_text_atomic(header_path, header.dump(2) + "\n");
}

/// Loads a manifest from a directory or a manifest.jsonl path and verifies
/// its hash against the header.
inline DatasetManifest load_manifest(const std::filesystem::path& path) {
  const auto file = std::filesystem::is_directory(path) ? path / kManifestFile : path;
  const auto header_path = file.parent_path() / kManifestHeaderFile;
  if (!std::filesystem::exists(file)) throw DataUnavailableError("no manifest at " + file.string());
  DatasetManifest m;
  std::istringstream in(read_text(file));
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      m.rows.push_back(row_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(file.string() + ": line " + std::to_string(lineno) + ": " + e.what(), lineno);
    }
  }
  const auto computed = compute_manifest_hash(m.rows);
  if (std::filesystem::exists(header_path)) {
    const auto header = nlohmann::json::parse(read_text(header_path));
    m.schema_version = header.value("schema_version", kManifestSchemaVersion);
    m.created_at = header.value("created_at", "");
    m.manifest_hash = header.value("manifest_hash", "");
    if (m.manifest_hash != computed)
      throw IntegrityError("manifest hash mismatch: header " + m.manifest_hash + ", content " + computed);
  } else {
    m.manifest_hash = computed;
  }
  return m;
}

/// Files under `root` that no manifest row references and that are not in
/// quarantine. Manifest files themselves are ignored.
inline std::vector<std::filesystem::path> unreferenced_files(const std::filesystem::path& root,
                                                             const DatasetManifest& m) {
  std::set<std::string> referenced;
  for (const auto& r : m.rows)
    for (const auto& a : r.assets)
      if (a) referenced.insert(a->path);
  std::vector<std::filesystem::path> out;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = entry.path().lexically_relative(root);
    const auto rel_s = rel.generic_string();
    if (rel_s == kManifestFile || rel_s == kManifestHeaderFile) continue;
    if (*rel.begin() == kQuarantineDir) continue;
    if (*rel.begin() != kImagesDir) continue;
    if (!referenced.contains(rel_s)) out.push_back(rel);
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace welfare::ingestion
