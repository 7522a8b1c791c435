#include <gtest/gtest.h>

#include <algorithm>
#include <mutex>
#include <thread>

#include "support/mirror.hpp"
#include "support/temp_dir.hpp"
#include "welfare/hash.hpp"
#include "welfare/ingestion/scraper.hpp"

namespace welfare::ingestion {
namespace {

using testing::MirrorFamily;
using testing::TempDir;

ScrapeConfig config_for(const std::string& base, const std::filesystem::path& out) {
  ScrapeConfig c;
  c.base_url = base;
  c.output_root = out;
  c.min_request_interval_ms = 0;
  c.retry_backoff_ms = 1;
  c.max_retries = 1;
  return c;
}

TEST(Url, ResolvesRelativeReferences) {
  EXPECT_EQ(resolve_url("http://h:1/a/b.html", "c.jpg"), "http://h:1/a/c.jpg");
  EXPECT_EQ(resolve_url("http://h:1/a/b.html", "/x/c.jpg"), "http://h:1/x/c.jpg");
  EXPECT_EQ(resolve_url("file:///m/families/f.html", "../img/x.jpg"), "file:///m/families/../img/x.jpg");
  EXPECT_EQ(resolve_url("http://h/a", "https://o/p"), "https://o/p");
  EXPECT_THROW(parse_url("ftp://x/y"), PreconditionError);
  EXPECT_THROW(parse_url("nothing"), PreconditionError);
}

TEST(Pages, ParseFamilyPage) {
  const std::string html =
      "<meta name=\"country\" content=\"Cote d&#39;Ivoire\"><meta name=\"consumption\" content=\"54.20\">"
      "<img data-category=\"stoves\" src=\"s.jpg\"><img data-category=\"roofs\" src=\"r.jpg\">"
      "<img data-category=\"cars\" src=\"c.jpg\">";
  const auto f = parse_family_page("f9", "http://h/fam/f9.html", html, {Category::kStoves});
  EXPECT_EQ(f.meta.country, "Cote d'Ivoire");
  EXPECT_DOUBLE_EQ(f.meta.monthly_consumption_usd, 54.20);
  ASSERT_EQ(f.images.size(), 1u);
  EXPECT_EQ(f.images[0].second, "http://h/fam/s.jpg");
  EXPECT_THROW(parse_family_page("f9", "http://h/x", "<img data-category=\"stoves\" src=\"s\">", {Category::kStoves}),
               ParseError);
}

TEST(ScrapeIndex, ThreeFamiliesStovesOnly) {
  TempDir dir;
  auto fams = testing::three_families();
  fams[1].categories.erase(Category::kStoves);
  testing::write_mirror(dir.path() / "mirror", fams);
  auto cfg = config_for(testing::file_url(dir.path() / "mirror"), dir.path() / "out");
  cfg.categories = {Category::kStoves};
  FileFetcher fetcher;
  const auto listings = scrape_family_index(cfg, fetcher);
  ASSERT_EQ(listings.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(listings[i].meta.family_id, fams[i].id);
    EXPECT_LE(listings[i].images.size(), 1u);
    for (const auto& [c, _] : listings[i].images) EXPECT_EQ(c, Category::kStoves);
  }
  EXPECT_TRUE(listings[1].images.empty());
}

TEST(ScrapeIndex, OrderedByFamilyIdAndSkipsMalformed) {
  TempDir dir;
  std::vector<MirrorFamily> fams = {{"z9", "Chad", 30}, {"a1", "Peru", 90}, {"m5", "Laos", 45}};
  testing::write_mirror(dir.path(), fams);
  testing::put(dir.path() / "families" / "m5.html", "<html>no metadata</html>");
  FileFetcher fetcher;
  const auto listings = scrape_family_index(config_for(testing::file_url(dir.path()), dir.path() / "o"), fetcher);
  ASSERT_EQ(listings.size(), 2u);
  EXPECT_EQ(listings[0].meta.family_id, "a1");
  EXPECT_EQ(listings[1].meta.family_id, "z9");
}

TEST(ScrapeIndex, EmptyCategoriesRejected) {
  auto cfg = config_for("file:///nowhere", "/tmp/none");
  cfg.categories.clear();
  FileFetcher fetcher;
  EXPECT_THROW(scrape_family_index(cfg, fetcher), PreconditionError);
  EXPECT_EQ(fetcher.request_count(), 0u);
}

TEST(ScrapeIndex, UnreachableServerIsRetryable) {
  auto cfg = config_for("http://127.0.0.1:1", "/tmp/none");
  cfg.max_retries = 0;
  HttpFetcher fetcher(nullptr, 1);
  try {
    scrape_family_index(cfg, fetcher);
    FAIL() << "expected NetworkError";
  } catch (const NetworkError& e) {
    EXPECT_TRUE(e.retryable());
  }
}

TEST(Download, MissingAssetRecordsErrorAndWritesNothing) {
  TempDir dir;
  testing::MirrorServer server(dir.path() / "mirror");
  std::filesystem::create_directories(dir.path() / "mirror");
  auto cfg = config_for(server.base_url(), dir.path() / "out");
  HttpFetcher fetcher;
  const HouseholdMeta meta{"f1", "Chad", 30};
  const auto r = download_asset(server.base_url() + "/img/none.jpg", meta, Category::kRoofs, cfg, fetcher);
  EXPECT_FALSE(r.asset);
  ASSERT_TRUE(r.error);
  EXPECT_EQ(r.error->http_status, 404);
  EXPECT_EQ(fetcher.request_count(), 1u);  // 4xx is not retried
  EXPECT_FALSE(std::filesystem::exists(dir.path() / "out" / kImagesDir));
}

TEST(Download, CorruptBytesGoToQuarantine) {
  TempDir dir;
  MirrorFamily f{"f1", "Chad", 30, {Category::kRoofs}, {}, {Category::kRoofs}};
  testing::write_mirror(dir.path() / "m", {f});
  auto cfg = config_for(testing::file_url(dir.path() / "m"), dir.path() / "out");
  FileFetcher fetcher;
  const auto url = testing::file_url(dir.path() / "m" / testing::image_rel(f, Category::kRoofs));
  const auto r = download_asset(url, {"f1", "Chad", 30}, Category::kRoofs, cfg, fetcher);
  ASSERT_TRUE(r.error);
  EXPECT_TRUE(r.error->quarantined);
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "out" / kQuarantineDir / "30.00__Chad__f1__roofs__01.jpg"));
  EXPECT_FALSE(std::filesystem::exists(dir.path() / "out" / kImagesDir));
}

TEST(Download, ResumeMakesNoNetworkCalls) {
  TempDir dir;
  testing::write_mirror(dir.path() / "m", testing::three_families());
  auto cfg = config_for(testing::file_url(dir.path() / "m"), dir.path() / "out");
  const HouseholdMeta meta{"f001", "Burundi", 27.5};
  const auto url = testing::file_url(dir.path() / "m" / "img" / "f001-stoves.jpg");
  FileFetcher first;
  const auto a = download_asset(url, meta, Category::kStoves, cfg, first);
  ASSERT_TRUE(a.asset);
  EXPECT_EQ(first.request_count(), 1u);
  EXPECT_EQ(a.asset->local_path.filename(), "27.50__Burundi__f001__stoves__01.jpg");
  EXPECT_EQ(a.asset->content_hash, sha256_file(a.asset->local_path));

  FileFetcher second;
  const auto b = download_asset(url, meta, Category::kStoves, cfg, second);
  EXPECT_EQ(second.request_count(), 0u);
  EXPECT_EQ(b.asset, a.asset);

  cfg.resume = false;
  FileFetcher third;
  download_asset(url, meta, Category::kStoves, cfg, third);
  EXPECT_EQ(third.request_count(), 1u);
}

TEST(Download, HighResolutionStoredVerbatim) {
  TempDir dir;
  const auto bytes = testing::jpeg_bytes(2799, 1865, cv::Scalar(90, 120, 150), 7);
  testing::put(dir.path() / "m" / "big.jpg", bytes);
  auto cfg = config_for(testing::file_url(dir.path() / "m"), dir.path() / "out");
  FileFetcher fetcher;
  const auto r = download_asset(testing::file_url(dir.path() / "m" / "big.jpg"), {"f2", "Peru", 88}, Category::kRoofs,
                                cfg, fetcher);
  ASSERT_TRUE(r.asset);
  EXPECT_EQ(r.asset->byte_size, bytes.size());
  EXPECT_EQ(r.asset->content_hash, sha256_hex(bytes));
  const auto img = cv::imread(r.asset->local_path.string());
  EXPECT_EQ(img.cols, 2799);
  EXPECT_EQ(img.rows, 1865);
}

RawImageAsset fake_asset(const std::string& fam, Category c, const std::string& hash) {
  RawImageAsset a;
  a.family_id = fam;
  a.category = c;
  a.remote_url = "http://x/" + fam + std::string(slug(c));
  a.local_path = std::string(kImagesDir) + "/" + fam + "-" + std::string(slug(c)) + ".jpg";
  a.content_hash = hash;
  a.byte_size = 10;
  return a;
}

TEST(Manifest, CompleteFamiliesGiveFourteenRefs) {
  std::vector<RawImageAsset> assets;
  for (const auto* fam : {"a", "b"})
    for (Category c : kCategoryOrder) assets.push_back(fake_asset(fam, c, std::string(fam) + std::string(slug(c))));
  const auto m = build_manifest(assets, {{"a", "Chad", 10}, {"b", "Peru", 20}});
  EXPECT_EQ(m.rows.size(), 2u);
  EXPECT_EQ(m.asset_ref_count(), 14u);
}

TEST(Manifest, MissingShowersIsExplicitlyAbsent) {
  std::vector<RawImageAsset> assets;
  for (Category c : kCategoryOrder)
    if (c != Category::kShowers) assets.push_back(fake_asset("a", c, std::string(slug(c))));
  const auto m = build_manifest(assets, {{"a", "Chad", 10}});
  const auto j = row_to_json(m.rows[0]);
  ASSERT_TRUE(j.at("assets").contains("showers"));
  EXPECT_TRUE(j.at("assets").at("showers").is_null());
  EXPECT_FALSE(m.rows[0].assets[category_index(Category::kShowers)]);
  EXPECT_EQ(m.rows[0].present_count(), 6u);
}

TEST(Manifest, DuplicateHashSharesOneBlob) {
  const auto m = build_manifest({fake_asset("a", Category::kRoofs, "same"), fake_asset("b", Category::kRoofs, "same")},
                                {{"a", "Chad", 10}, {"b", "Peru", 20}});
  EXPECT_EQ(m.asset_ref_count(), 2u);
  EXPECT_EQ(m.blobs().size(), 1u);
  EXPECT_EQ(m.rows[0].assets[4]->path, m.rows[1].assets[4]->path);
  EXPECT_NE(m.rows[0].assets[4]->name, m.rows[1].assets[4]->name);
}

TEST(Manifest, OrphansAreListed) {
  try {
    build_manifest({fake_asset("ghost", Category::kRoofs, "h"), fake_asset("zz", Category::kRoofs, "g")},
                   {{"a", "Chad", 10}});
    FAIL() << "expected PreconditionError";
  } catch (const PreconditionError& e) {
    EXPECT_NE(std::string(e.what()).find("ghost"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("zz"), std::string::npos);
  }
}

TEST(Manifest, HashIndependentOfInputOrder) {
  std::vector<RawImageAsset> assets;
  for (Category c : kCategoryOrder) assets.push_back(fake_asset("a", c, std::string(slug(c))));
  auto reversed = assets;
  std::reverse(reversed.begin(), reversed.end());
  EXPECT_EQ(build_manifest(assets, {{"a", "Chad", 10}}).manifest_hash,
            build_manifest(reversed, {{"a", "Chad", 10}}).manifest_hash);
}

TEST(Manifest, RoundTripsAndDetectsTamper) {
  TempDir dir;
  auto m = build_manifest({fake_asset("a", Category::kRoofs, "h1"), fake_asset("b", Category::kStoves, "h2")},
                          {{"a", "Chad", 10.5}, {"b", "Côte d'Ivoire", 20}});
  write_manifest(dir.path(), m);
  const auto back = load_manifest(dir.path());
  EXPECT_EQ(back.rows, m.rows);
  EXPECT_EQ(back.manifest_hash, m.manifest_hash);

  auto text = read_text(dir.path() / kManifestFile);
  text[text.find("10.5")] = '9';
  write_text_atomic(dir.path() / kManifestFile, text);
  EXPECT_THROW(load_manifest(dir.path()), IntegrityError);
}

TEST(Crawl, FixtureMirrorOverFileUrls) {
  TempDir dir;
  auto fams = testing::three_families();
  fams[0].categories.erase(Category::kShowers);
  fams[2].missing_files = {Category::kBedrooms};
  fams[2].corrupt_files = {Category::kRoofs};
  testing::write_mirror(dir.path() / "m", fams);
  auto cfg = config_for(testing::file_url(dir.path() / "m"), dir.path() / "out");
  FileFetcher fetcher;
  const auto r = crawl(cfg, fetcher);
  EXPECT_EQ(r.families, 3u);
  EXPECT_EQ(r.manifest.asset_ref_count(), 6u + 7u + 5u);
  ASSERT_EQ(r.errors.size(), 2u);
  const auto* f3 = r.manifest.find("f003");
  ASSERT_NE(f3, nullptr);
  EXPECT_EQ(f3->errors.size(), 2u);
  EXPECT_TRUE(unreferenced_files(cfg.output_root, r.manifest).empty());
  EXPECT_TRUE(std::filesystem::exists(cfg.output_root / kQuarantineDir));

  // Every stored file round-trips through the filename grammar and its hash.
  for (const auto& row : r.manifest.rows)
    for (const auto& a : row.assets) {
      if (!a) continue;
      const auto parsed = parse_asset_filename(a->name);
      EXPECT_EQ(parsed.family_id, row.meta.family_id);
      EXPECT_EQ(sha256_file(cfg.output_root / a->path), a->hash);
    }
}

TEST(Crawl, ResumeIsByteIdentical) {
  TempDir dir;
  testing::write_mirror(dir.path() / "m", testing::three_families());
  auto cfg = config_for(testing::file_url(dir.path() / "m"), dir.path() / "out");
  FileFetcher first;
  const auto a = crawl(cfg, first);
  const auto tree = testing::snapshot_tree(cfg.output_root);

  FileFetcher second;
  const auto b = crawl(cfg, second);
  EXPECT_EQ(b.manifest.manifest_hash, a.manifest.manifest_hash);
  EXPECT_EQ(testing::snapshot_tree(cfg.output_root), tree);
  // Index plus three family pages; no image requests.
  EXPECT_EQ(second.request_count(), 4u);
}

TEST(Crawl, DuplicateImagesStoredOnce) {
  TempDir dir;
  auto fams = testing::three_families();
  testing::write_mirror(dir.path() / "m", fams);
  // Same bytes for two families' roofs.
  std::filesystem::copy_file(dir.path() / "m" / testing::image_rel(fams[0], Category::kRoofs),
                             dir.path() / "m" / testing::image_rel(fams[1], Category::kRoofs),
                             std::filesystem::copy_options::overwrite_existing);
  auto cfg = config_for(testing::file_url(dir.path() / "m"), dir.path() / "out");
  FileFetcher fetcher;
  const auto r = crawl(cfg, fetcher);
  EXPECT_EQ(r.manifest.asset_ref_count(), 21u);
  EXPECT_EQ(r.manifest.blobs().size(), 20u);
  std::size_t files = 0;
  for (const auto& e : std::filesystem::directory_iterator(cfg.output_root / kImagesDir)) files += e.is_regular_file();
  EXPECT_EQ(files, 20u);
  EXPECT_TRUE(unreferenced_files(cfg.output_root, r.manifest).empty());

  FileFetcher again;
  const auto r2 = crawl(cfg, again);
  EXPECT_EQ(r2.manifest.manifest_hash, r.manifest.manifest_hash);
  EXPECT_EQ(again.request_count(), 4u);
}

TEST(Crawl, StrayFilesAreReported) {
  TempDir dir;
  testing::write_mirror(dir.path() / "m", testing::three_families());
  auto cfg = config_for(testing::file_url(dir.path() / "m"), dir.path() / "out");
  FileFetcher fetcher;
  const auto r = crawl(cfg, fetcher);
  testing::put(cfg.output_root / kImagesDir / "stray.jpg", "x");
  const auto extra = unreferenced_files(cfg.output_root, r.manifest);
  ASSERT_EQ(extra.size(), 1u);
  EXPECT_EQ(extra[0].filename(), "stray.jpg");
}

TEST(RateLimiter, SpacesContendingCallersOnOneHost) {
  using Clock = std::chrono::steady_clock;
  RateLimiter limiter(std::chrono::milliseconds(20));
  std::mutex mu;
  std::vector<Clock::time_point> released;
  std::vector<std::jthread> threads;
  for (int t = 0; t < 4; ++t)
    threads.emplace_back([&] {
      for (int k = 0; k < 4; ++k) {
        limiter.acquire("a.example");
        std::lock_guard lock(mu);
        released.push_back(Clock::now());
      }
    });
  threads.clear();
  std::sort(released.begin(), released.end());
  ASSERT_EQ(released.size(), 16u);
  for (std::size_t i = 1; i < released.size(); ++i)
    EXPECT_GE(std::chrono::duration_cast<std::chrono::microseconds>(released[i] - released[i - 1]).count(),
              20'000 - 5'000);
  EXPECT_GE(released.back() - released.front(), std::chrono::milliseconds(15 * 20 - 5));
}

TEST(RateLimiter, HostsAreIndependent) {
  RateLimiter limiter(std::chrono::milliseconds(500));
  const auto t0 = std::chrono::steady_clock::now();
  limiter.acquire("a.example");
  limiter.acquire("b.example");
  limiter.acquire("c.example");
  EXPECT_LT(std::chrono::steady_clock::now() - t0, std::chrono::milliseconds(100));
}

TEST(Crawl, HttpMirrorHonoursRateLimit) {
  TempDir dir;
  testing::write_mirror(dir.path() / "m", testing::three_families());
  testing::MirrorServer server(dir.path() / "m");
  auto cfg = config_for(server.base_url(), dir.path() / "out");
  cfg.min_request_interval_ms = 40;
  cfg.max_concurrent = 4;
  cfg.categories = {Category::kStoves, Category::kRoofs, Category::kBathrooms};
  auto fetcher = make_fetcher(cfg.base_url, cfg.min_request_interval_ms);
  const auto r = crawl(cfg, *fetcher);
  EXPECT_EQ(r.manifest.asset_ref_count(), 9u);

  auto log = server.log();
  ASSERT_EQ(log.size(), 1u + 3u + 9u);
  std::sort(log.begin(), log.end(), [](const auto& a, const auto& b) { return a.at < b.at; });
  // The server stamps after reading each request, so a single gap can shrink
  // by one request's handling latency. The total span only loses it once.
  using us = std::chrono::microseconds;
  for (std::size_t i = 1; i < log.size(); ++i) {
    const auto gap = std::chrono::duration_cast<us>(log[i].at - log[i - 1].at);
    EXPECT_GE(gap.count(), 40'000 - 5'000) << log[i - 1].path << " -> " << log[i].path;
  }
  const auto span = std::chrono::duration_cast<us>(log.back().at - log.front().at);
  EXPECT_GE(span.count(), static_cast<long>(log.size() - 1) * 40'000 - 5'000);
}

TEST(Crawl, HttpMirror404IsRecordedNotFatal) {
  TempDir dir;
  auto fams = testing::three_families();
  fams[0].missing_files = {Category::kStoves};
  testing::write_mirror(dir.path() / "m", fams);
  testing::MirrorServer server(dir.path() / "m");
  auto cfg = config_for(server.base_url(), dir.path() / "out");
  cfg.categories = {Category::kStoves};
  HttpFetcher fetcher;
  const auto r = crawl(cfg, fetcher);
  EXPECT_EQ(r.manifest.asset_ref_count(), 2u);
  ASSERT_EQ(r.errors.size(), 1u);
  EXPECT_EQ(r.errors[0].http_status, 404);
  EXPECT_EQ(r.errors[0].family_id, "f001");
}

}  // namespace
}  // namespace welfare::ingestion
