#pragma once

#include <httplib.h>
// <resolv.h> (pulled in by httplib) defines _res, which collides with Eigen.
#ifdef _res
#undef _res
#endif

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>

#include "welfare/error.hpp"

namespace welfare::ingestion {

struct Url {
  std::string scheme;     // "http", "https" or "file"
  std::string authority;  // host[:port]; empty for file
  std::string path;       // begins with '/'

  std::string origin() const { return scheme + "://" + authority; }
  std::string str() const { return origin() + path; }
};

inline Url parse_url(const std::string& url) {
  const auto sep = url.find("://");
  if (sep == std::string::npos) throw PreconditionError("url without scheme: " + url);
  Url u;
  u.scheme = url.substr(0, sep);
  const auto rest = url.substr(sep + 3);
  const auto slash = rest.find('/');
  u.authority = rest.substr(0, slash);
  u.path = slash == std::string::npos ? "/" : rest.substr(slash);
  if (u.scheme != "http" && u.scheme != "https" && u.scheme != "file")
    throw PreconditionError("unsupported url scheme: " + u.scheme);
  return u;
}

// Resolves an href/src found on a page at `page_url`.
inline std::string resolve_url(const std::string& page_url, const std::string& ref) {
  if (ref.find("://") != std::string::npos) return ref;
  const Url base = parse_url(page_url);
  if (!ref.empty() && ref.front() == '/') return base.origin() + ref;
  const auto dir = base.path.substr(0, base.path.rfind('/') + 1);
  return base.origin() + dir + ref;
}

// Spaces request start times on the same host at least `interval` apart.
class RateLimiter {
 public:
  explicit RateLimiter(std::chrono::milliseconds interval) : interval_(interval) {}

  // Blocks until at least `interval` has passed since the previous caller
  // for this host was released. Callers for one host go through one at a time.
  void acquire(const std::string& host) {
    std::shared_ptr<Gate> gate;
    {
      std::lock_guard lock(mu_);
      auto& g = gates_[host];
      if (!g) g = std::make_shared<Gate>();
      gate = g;
    }
    std::lock_guard lock(gate->mu);
    if (gate->last) std::this_thread::sleep_until(*gate->last + interval_);
    gate->last = std::chrono::steady_clock::now();
  }

 private:
  struct Gate {
    std::mutex mu;
    std::optional<std::chrono::steady_clock::time_point> last;
  };
  std::chrono::milliseconds interval_;
  std::mutex mu_;
  std::map<std::string, std::shared_ptr<Gate>> gates_;
};

class Fetcher {
 public:
  virtual ~Fetcher() = default;
  // Returns the body of a 2xx response. Throws NetworkError otherwise;
  // 4xx are not retryable, connection failures and 5xx are.
  virtual std::string get(const std::string& url) = 0;
  std::size_t request_count() const { return requests_.load(); }

 protected:
  void count() { ++requests_; }

 private:
  std::atomic<std::size_t> requests_{0};
};

class HttpFetcher : public Fetcher {
 public:
  explicit HttpFetcher(std::shared_ptr<RateLimiter> limiter = nullptr, int timeout_s = 30)
      : limiter_(std::move(limiter)), timeout_s_(timeout_s) {}

  std::string get(const std::string& url) override {
    const Url u = parse_url(url);
    if (u.scheme == "file") throw PreconditionError("HttpFetcher cannot fetch file:// urls");
    if (limiter_) limiter_->acquire(u.authority);
    count();
    httplib::Client client(u.origin());
    client.set_connection_timeout(timeout_s_, 0);
    client.set_read_timeout(timeout_s_, 0);
    client.set_follow_location(true);
    auto res = client.Get(u.path);
    if (!res) throw NetworkError("GET " + url + " failed: " + httplib::to_string(res.error()), true);
    if (res->status >= 200 && res->status < 300) return res->body;
    throw NetworkError("GET " + url + " returned HTTP " + std::to_string(res->status), res->status >= 500,
                       res->status);
  }

 private:
  std::shared_ptr<RateLimiter> limiter_;
  int timeout_s_;
};

// Reads a static mirror from disk through file:// urls.
class FileFetcher : public Fetcher {
 public:
  std::string get(const std::string& url) override {
    const Url u = parse_url(url);
    if (u.scheme != "file") throw PreconditionError("FileFetcher only handles file:// urls");
    count();
    const std::filesystem::path p = u.authority.empty() ? u.path : "/" + u.authority + u.path;
    std::ifstream in(p, std::ios::binary);
    if (!in) throw NetworkError("missing file " + p.string(), false, 404);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }
};

inline std::unique_ptr<Fetcher> make_fetcher(const std::string& base_url, int min_request_interval_ms) {
  if (parse_url(base_url).scheme == "file") return std::make_unique<FileFetcher>();
  return std::make_unique<HttpFetcher>(
      std::make_shared<RateLimiter>(std::chrono::milliseconds(min_request_interval_ms)));
}

}  // namespace welfare::ingestion
