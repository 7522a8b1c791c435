#pragma once

#include <spdlog/spdlog.h>

#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <thread>
#include <vector>

#include "welfare/category.hpp"
#include "welfare/error.hpp"
#include "welfare/hash.hpp"
#include "welfare/ingestion/fetcher.hpp"
#include "welfare/ingestion/filename.hpp"
#include "welfare/ingestion/manifest.hpp"
#include "welfare/ingestion/types.hpp"

namespace welfare::ingestion {

// Page format of the mirror:
//   index.html          <a class="family" data-family-id="ID" href="family/ID.html">
//   family/ID.html      <meta name="country" content="..."> <meta name="consumption" content="54.20">
//                       <img data-category="stoves" src="../media/ID/stoves.jpg">

inline std::string decode_entities(std::string s) {
  static const std::pair<std::string_view, std::string_view> kEntities[] = {
      {"&#39;", "'"}, {"&apos;", "'"}, {"&quot;", "\""}, {"&lt;", "<"}, {"&gt;", ">"}, {"&amp;", "&"}};
  for (const auto& [from, to] : kEntities) {
    for (std::size_t pos = 0; (pos = s.find(from, pos)) != std::string::npos; pos += to.size())
      s.replace(pos, from.size(), to);
  }
  return s;
}

namespace detail {

inline std::optional<std::string> attr(const std::string& tag, const std::string& name) {
  const std::regex re(name + R"(\s*=\s*"([^"]*)\")");
  std::smatch m;
  if (std::regex_search(tag, m, re)) return decode_entities(m[1].str());
  return std::nullopt;
}

inline std::vector<std::string> tags(const std::string& html, const std::string& tag_name) {
  const std::regex re("<" + tag_name + R"(\b[^>]*>)", std::regex::icase);
  std::vector<std::string> out;
  for (auto it = std::sregex_iterator(html.begin(), html.end(), re); it != std::sregex_iterator(); ++it)
    out.push_back(it->str());
  return out;
}

template <typename F>
auto with_retries(const ScrapeConfig& cfg, F&& f) -> decltype(f()) {
  for (int attempt = 0;; ++attempt) {
    try {
      return f();
    } catch (const NetworkError& e) {
      if (!e.retryable() || attempt >= cfg.max_retries) throw;
      std::this_thread::sleep_for(std::chrono::milliseconds(cfg.retry_backoff_ms * (1 << attempt)));
    }
  }
}

}  // namespace detail

inline std::vector<std::pair<std::string, std::string>> parse_index_page(const std::string& html) {
  std::vector<std::pair<std::string, std::string>> out;  // (family_id, href)
  for (const auto& tag : detail::tags(html, "a")) {
    auto id = detail::attr(tag, "data-family-id");
    auto href = detail::attr(tag, "href");
    if (id && href) out.emplace_back(*id, *href);
  }
  return out;
}

/// Parses one family page. Throws ParseError on a malformed page.
inline FamilyListing parse_family_page(const std::string& family_id, const std::string& page_url,
                                       const std::string& html, const std::vector<Category>& wanted) {
  FamilyListing f;
  f.meta.family_id = family_id;
  std::optional<std::string> country, consumption;
  for (const auto& tag : detail::tags(html, "meta")) {
    const auto name = detail::attr(tag, "name");
    if (!name) continue;
    if (*name == "country") country = detail::attr(tag, "content");
    if (*name == "consumption") consumption = detail::attr(tag, "content");
  }
  if (!country || country->empty()) throw ParseError("family " + family_id + ": missing country", 0);
  if (!consumption) throw ParseError("family " + family_id + ": missing consumption", 0);
  double value = 0;
  const auto* end = consumption->data() + consumption->size();
  const auto [ptr, ec] = std::from_chars(consumption->data(), end, value);
  if (ec != std::errc() || ptr != end || !(value > 0))
    throw ParseError("family " + family_id + ": bad consumption '" + *consumption + "'", 0);
  f.meta.country = *country;
  f.meta.monthly_consumption_usd = value;

  for (const auto& tag : detail::tags(html, "img")) {
    const auto cat_s = detail::attr(tag, "data-category");
    const auto src = detail::attr(tag, "src");
    if (!cat_s || !src) continue;
    const auto cat = try_parse_category(*cat_s);
    if (!cat || std::find(wanted.begin(), wanted.end(), *cat) == wanted.end()) continue;
    // One image per category; later duplicates are ignored.
    if (std::any_of(f.images.begin(), f.images.end(), [&](const auto& p) { return p.first == *cat; })) continue;
    f.images.emplace_back(*cat, resolve_url(page_url, *src));
  }
  std::sort(f.images.begin(), f.images.end());
  return f;
}

inline std::string index_url(const std::string& base_url) {
  auto base = base_url;
  if (base.back() != '/') base.push_back('/');
  return base + "index.html";
}

/// Lists every family on the mirror with the requested categories'
/// image urls, ordered by family_id. Malformed family pages are skipped.
inline std::vector<FamilyListing> scrape_family_index(const ScrapeConfig& config, Fetcher& fetcher) {
  config.validate();
  const auto idx_url = index_url(config.base_url);
  const auto index_html = detail::with_retries(config, [&] { return fetcher.get(idx_url); });
  auto entries = parse_index_page(index_html);
  std::sort(entries.begin(), entries.end());
  entries.erase(std::unique(entries.begin(), entries.end(),
                            [](const auto& a, const auto& b) { return a.first == b.first; }),
                entries.end());

  std::vector<FamilyListing> out;
  for (const auto& [id, href] : entries) {
    const auto url = resolve_url(idx_url, href);
    try {
      const auto html = detail::with_retries(config, [&] { return fetcher.get(url); });
      out.push_back(parse_family_page(id, url, html, config.categories));
    } catch (const ParseError& e) {
      spdlog::warn("skipping family {}: {}", id, e.what());
    } catch (const NetworkError& e) {
      spdlog::warn("skipping family {}: {}", id, e.what());
    }
  }
  return out;
}

inline bool is_decodable_image(const std::string& bytes) {
  if (bytes.empty()) return false;
  const cv::Mat buf(1, static_cast<int>(bytes.size()), CV_8U, const_cast<char*>(bytes.data()));
  return !cv::imdecode(buf, cv::IMREAD_COLOR).empty();
}

struct DownloadResult {
  std::optional<RawImageAsset> asset;
  std::optional<AssetError> error;
};

// Prior state of an output tree, used to skip already-downloaded assets.
struct ResumeIndex {
  std::map<std::string, AssetRef> by_name;

  static ResumeIndex load(const std::filesystem::path& root) {
    ResumeIndex idx;
    if (!std::filesystem::exists(root / kManifestFile)) return idx;
    try {
      for (const auto& row : load_manifest(root).rows)
        for (const auto& a : row.assets)
          if (a) idx.by_name.emplace(a->name, *a);
    } catch (const Error& e) {
      spdlog::warn("ignoring unreadable prior manifest: {}", e.what());
    }
    return idx;
  }
};

/// Downloads one image into {output_root}/images under its canonical name.
/// With resume on, an existing file whose hash matches the prior manifest
/// (or that has no prior record) is reused without touching the network.
inline DownloadResult download_asset(const std::string& asset_url, const HouseholdMeta& meta, Category category,
                                     const ScrapeConfig& config, Fetcher& fetcher,
                                     const ResumeIndex* resume_index = nullptr) {
  namespace fs = std::filesystem;
  const auto name = encode_asset_filename(meta, category, 1);
  const auto images = config.output_root / kImagesDir;
  const auto target = images / name;
  auto make_asset = [&](const fs::path& path, std::string hash, std::uint64_t size) {
    return RawImageAsset{meta.family_id, category, asset_url, path, std::move(hash), size};
  };

  if (config.resume) {
    const AssetRef* prior = nullptr;
    if (resume_index)
      if (auto it = resume_index->by_name.find(name); it != resume_index->by_name.end()) prior = &it->second;
    const fs::path stored = prior ? config.output_root / prior->path : target;
    if (fs::exists(stored)) {
      auto hash = sha256_file(stored);
      if (!prior || prior->hash == hash) return {make_asset(stored, std::move(hash), fs::file_size(stored)), {}};
    }
  }

  std::string bytes;
  try {
    bytes = detail::with_retries(config, [&] { return fetcher.get(asset_url); });
  } catch (const NetworkError& e) {
    return {{}, AssetError{meta.family_id, category, asset_url, e.what(), e.status(), false}};
  }

  if (!is_decodable_image(bytes)) {
    const auto qdir = config.output_root / kQuarantineDir;
    fs::create_directories(qdir);
    write_text_atomic(qdir / name, bytes);
    return {{}, AssetError{meta.family_id, category, asset_url, "undecodable image bytes", 0, true}};
  }

  fs::create_directories(images);
  write_text_atomic(target, bytes);
  return {make_asset(target, sha256_hex(bytes), bytes.size()), {}};
}

struct CrawlResult {
  DatasetManifest manifest;
  std::vector<AssetError> errors;
  std::size_t families = 0;
};

/// Full crawl: index, concurrent downloads, manifest. Per-asset failures are
/// recorded in the manifest rows; only an unreachable index aborts.
inline CrawlResult crawl(const ScrapeConfig& config, Fetcher& fetcher) {
  namespace fs = std::filesystem;
  config.validate();
  fs::create_directories(config.output_root);
  const auto listings = scrape_family_index(config, fetcher);
  const auto resume_index = config.resume ? ResumeIndex::load(config.output_root) : ResumeIndex{};

  struct Job {
    const FamilyListing* family;
    Category category;
    std::string url;
  };
  std::vector<Job> jobs;
  for (const auto& f : listings)
    for (const auto& [cat, url] : f.images) jobs.push_back({&f, cat, url});

  std::vector<DownloadResult> results(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next++) < jobs.size();) {
      const auto& j = jobs[i];
      try {
        results[i] = download_asset(j.url, j.family->meta, j.category, config, fetcher, &resume_index);
      } catch (const Error& e) {
        results[i].error = AssetError{j.family->meta.family_id, j.category, j.url, e.what(), 0, false};
      }
    }
  };
  const auto n_workers = std::min<std::size_t>(static_cast<std::size_t>(config.max_concurrent),
                                               std::max<std::size_t>(jobs.size(), 1));
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  pool.clear();

  CrawlResult out;
  out.families = listings.size();
  std::vector<RawImageAsset> assets;
  std::vector<HouseholdMeta> metas;
  for (const auto& f : listings) metas.push_back(f.meta);
  for (auto& r : results) {
    if (r.asset) assets.push_back(*r.asset);
    if (r.error) {
      spdlog::warn("asset {} {} failed: {}", r.error->family_id, slug(r.error->category), r.error->message);
      out.errors.push_back(*r.error);
    }
  }
  out.manifest = build_manifest(assets, metas, out.errors, config.output_root);

  // Drop redundant copies of duplicate content; the manifest points at one blob.
  for (const auto& row : out.manifest.rows)
    for (const auto& a : row.assets)
      if (a && a->path != (fs::path(kImagesDir) / a->name).generic_string())
        fs::remove(config.output_root / kImagesDir / a->name);

  write_manifest(config.output_root, out.manifest);
  return out;
}

}  // namespace welfare::ingestion
