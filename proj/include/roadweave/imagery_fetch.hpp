#pragma once

// Polite XYZ tile client: cache-first, rate limited, bounded concurrency,
// retries with exponential backoff, decode validation before caching.
//
// Cache layout under the cache root:
//   objects/<aa>/<sha256>       payload bytes, content addressed
//   tiles/<z>/<x>/<y>.json      key record: sha256, content type, validators
//   index.jsonl                 one line per stored tile (append only)
// Payload and key record are each replaced atomically, payload first, so a
// key record only ever points at a complete payload.

#include <roadweave/digest.hpp>
#include <roadweave/errors.hpp>
#include <roadweave/fs_util.hpp>
#include <roadweave/image.hpp>
#include <roadweave/tile_geometry.hpp>

#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <ctime>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace roadweave {

inline constexpr const char* kTileKeyEnv = "ROADWEAVE_TILE_KEY";

inline std::string utc_timestamp(std::chrono::system_clock::time_point t) {
  const std::time_t tt = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// URL pattern with {z}, {x}, {y} (each exactly once) and an optional {key}
/// filled from the ROADWEAVE_TILE_KEY environment variable.
class UrlTemplate {
 public:
  explicit UrlTemplate(std::string text) : text_(std::move(text)) {
    for (const char* ph : {"{z}", "{x}", "{y}"}) {
      const auto first = text_.find(ph);
      if (first == std::string::npos || text_.find(ph, first + 1) != std::string::npos) {
        throw DomainError(std::string("URL template must contain ") + ph + " exactly once");
      }
    }
    if (text_.rfind("http://", 0) != 0 && text_.rfind("https://", 0) != 0) {
      throw DomainError("URL template must start with http:// or https://");
    }
  }

  const std::string& text() const noexcept { return text_; }
  bool needs_key() const { return text_.find("{key}") != std::string::npos; }

  std::string expand(const TileCoord& t, std::string_view key = {}) const {
    std::string s = text_;
    replace(s, "{z}", std::to_string(t.z));
    replace(s, "{x}", std::to_string(t.x));
    replace(s, "{y}", std::to_string(t.y));
    replace(s, "{key}", key);
    return s;
  }

  /// Safe for logs and error messages: the credential is never substituted.
  std::string redacted(const TileCoord& t) const { return expand(t, "***"); }

 private:
  static void replace(std::string& s, std::string_view ph, std::string_view v) {
    for (auto pos = s.find(ph); pos != std::string::npos; pos = s.find(ph, pos + v.size())) {
      s.replace(pos, ph.size(), v);
    }
  }
  std::string text_;
};

struct TileRequest {
  TileCoord coord;
  std::string url_template;
  int attempt = 0;  // attempts made so far; set by fetch_tile
};

struct TileAsset {
  TileCoord coord;
  std::string bytes;
  std::string content_type;
  std::string fetched_at;
};

struct FetchPolicy {
  double rate_per_s = 10.0;  // <= 0 disables rate limiting
  int concurrency = 4;       // in-flight cap
  double timeout_s = 30.0;
  int max_attempts = 4;
  double backoff_initial_s = 0.5;
  double backoff_factor = 2.0;
  bool offline = false;      // any cache miss is an immediate error
  bool revalidate = false;   // send conditional GETs for cached tiles
  int tile_px = kDefaultTilePx;
};

// ---------------------------------------------------------------------------

struct CachedTile {
  TileAsset asset;
  std::string sha256;
  std::string etag;
  std::string last_modified;
};

class TileCache {
 public:
  explicit TileCache(fs::path root) : root_(std::move(root)) {}

  const fs::path& root() const noexcept { return root_; }

  fs::path key_path(const TileCoord& t) const {
    return root_ / "tiles" / std::to_string(t.z) / std::to_string(t.x) / (std::to_string(t.y) + ".json");
  }
  fs::path object_path(const std::string& sha) const { return root_ / "objects" / sha.substr(0, 2) / sha; }

  /// Returns the cached tile when its key record and a payload matching the
  /// recorded digest are both present.
  std::optional<CachedTile> load(const TileCoord& t) const {
    std::error_code ec;
    const fs::path kp = key_path(t);
    if (!fs::exists(kp, ec)) return std::nullopt;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(read_file(kp));
    } catch (const std::exception&) {
      return std::nullopt;
    }
    CachedTile c;
    c.sha256 = rec.value("sha256", "");
    if (c.sha256.size() != 64) return std::nullopt;
    const fs::path op = object_path(c.sha256);
    if (!fs::exists(op, ec)) return std::nullopt;
    c.asset.bytes = read_file(op);
    if (sha256_hex(c.asset.bytes) != c.sha256) return std::nullopt;
    c.asset.coord = t;
    c.asset.content_type = rec.value("content_type", "");
    c.asset.fetched_at = rec.value("fetched_at", "");
    c.etag = rec.value("etag", "");
    c.last_modified = rec.value("last_modified", "");
    return c;
  }

  void store(const TileAsset& a, const std::string& etag = {}, const std::string& last_modified = {}) {
    const std::string sha = sha256_hex(a.bytes);
    std::error_code ec;
    if (!fs::exists(object_path(sha), ec)) write_file_atomic(object_path(sha), a.bytes);
    nlohmann::json rec = {{"z", a.coord.z},
                          {"x", a.coord.x},
                          {"y", a.coord.y},
                          {"sha256", sha},
                          {"content_type", a.content_type},
                          {"etag", etag},
                          {"last_modified", last_modified},
                          {"fetched_at", a.fetched_at}};
    write_file_atomic(key_path(a.coord), rec.dump() + "\n");
    std::lock_guard lock(index_mutex_);
    std::ofstream idx(root_ / "index.jsonl", std::ios::app | std::ios::binary);
    idx << nlohmann::json{{"key", a.coord.path_key()}, {"sha256", sha}, {"fetched_at", a.fetched_at}}.dump()
        << "\n";
  }

 private:
  fs::path root_;
  std::mutex index_mutex_;
};

// ---------------------------------------------------------------------------

/// Admits at most one request per 1/rate seconds. The bucket starts empty,
/// so n admissions span at least n/rate seconds.
class RateLimiter {
 public:
  using Clock = std::chrono::steady_clock;

  explicit RateLimiter(double rate_per_s) : rate_(rate_per_s) {}

  void acquire() {
    if (rate_ <= 0.0) return;
    const auto interval = std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(1.0 / rate_));
    Clock::time_point slot;
    {
      std::lock_guard lock(mutex_);
      const auto now = Clock::now();
      if (!started_) {
        next_ = now + interval;
        started_ = true;
      }
      slot = std::max(next_, now);
      next_ = slot + interval;
    }
    std::this_thread::sleep_until(slot);
  }

 private:
  double rate_;
  std::mutex mutex_;
  bool started_ = false;
  Clock::time_point next_{};
};

class Semaphore {
 public:
  explicit Semaphore(int n) : count_(n < 1 ? 1 : n) {}
  void acquire() {
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [&] { return count_ > 0; });
    --count_;
  }
  void release() {
    {
      std::lock_guard lock(mutex_);
      ++count_;
    }
    cv_.notify_one();
  }

 private:
  std::mutex mutex_;
  std::condition_variable cv_;
  int count_;
};

// ---------------------------------------------------------------------------

struct HttpResponse {
  int status = 0;  // 0: transport failure
  std::string body;
  std::string content_type;
  std::string etag;
  std::string last_modified;
  std::string error;
};

using HttpHeaders = std::multimap<std::string, std::string>;

class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  virtual HttpResponse get(const std::string& url, const HttpHeaders& headers, double timeout_s) = 0;
};

/// cpp-httplib backed transport. One client per call keeps it thread safe.
class HttplibTransport : public HttpTransport {
 public:
  HttpResponse get(const std::string& url, const HttpHeaders& headers, double timeout_s) override {
    const auto scheme_end = url.find("://");
    const auto path_start = url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
    const std::string base = path_start == std::string::npos ? url : url.substr(0, path_start);
    const std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);
    httplib::Client cli(base);
    const auto secs = static_cast<time_t>(timeout_s);
    const auto usecs = static_cast<time_t>((timeout_s - static_cast<double>(secs)) * 1e6);
    cli.set_connection_timeout(secs, usecs);
    cli.set_read_timeout(secs, usecs);
    // 304 Not Modified is a 3xx without Location; redirects are only
    // followed for unconditional requests.
    cli.set_follow_location(headers.empty());
    httplib::Headers h(headers.begin(), headers.end());
    h.emplace("User-Agent", std::string("roadweave/") + ROADWEAVE_VERSION);
    HttpResponse out;
    auto res = cli.Get(path, h);
    if (!res) {
      out.error = httplib::to_string(res.error());
      return out;
    }
    out.status = res->status;
    out.body = std::move(res->body);
    out.content_type = res->get_header_value("Content-Type");
    out.etag = res->get_header_value("ETag");
    out.last_modified = res->get_header_value("Last-Modified");
    return out;
  }
};

struct FetchStats {
  std::atomic<std::int64_t> cache_hits{0};
  std::atomic<std::int64_t> network_requests{0};
  std::atomic<std::int64_t> retries{0};
  std::atomic<std::int64_t> not_modified{0};
};

class TileFetcher {
 public:
  TileFetcher(FetchPolicy policy, fs::path cache_dir,
              std::shared_ptr<HttpTransport> transport = std::make_shared<HttplibTransport>())
      : policy_(policy),
        cache_(std::move(cache_dir)),
        transport_(std::move(transport)),
        limiter_(policy.rate_per_s),
        in_flight_(policy.concurrency) {
    if (policy_.max_attempts < 1) throw DomainError("max_attempts must be >= 1");
    if (policy_.concurrency < 1) throw DomainError("concurrency must be >= 1");
  }

  const FetchStats& stats() const noexcept { return stats_; }
  TileCache& cache() noexcept { return cache_; }
  const FetchPolicy& policy() const noexcept { return policy_; }

  /// Cache-first fetch of one tile; `req.attempt` reports the number of
  /// network attempts made (0 for a cache hit).
  TileAsset fetch_tile(TileRequest& req) {
    req.attempt = 0;
    std::optional<CachedTile> cached = cache_.load(req.coord);
    if (cached && !policy_.revalidate) {
      ++stats_.cache_hits;
      return std::move(cached->asset);
    }
    if (policy_.offline) {
      if (cached) {
        ++stats_.cache_hits;
        return std::move(cached->asset);
      }
      throw FetchError("tile " + req.coord.path_key() + " not in cache (offline mode)", 0);
    }
    const UrlTemplate tmpl(req.url_template);
    std::string key;
    if (tmpl.needs_key()) {
      const char* env = std::getenv(kTileKeyEnv);
      if (env == nullptr) throw FetchError(std::string(kTileKeyEnv) + " is not set", 0);
      key = env;
    }
    const std::string url = tmpl.expand(req.coord, key);
    HttpHeaders headers;
    if (cached) {
      if (!cached->etag.empty()) headers.emplace("If-None-Match", cached->etag);
      if (!cached->last_modified.empty()) headers.emplace("If-Modified-Since", cached->last_modified);
    }

    std::string last_error;
    double backoff = policy_.backoff_initial_s;
    for (int attempt = 1; attempt <= policy_.max_attempts; ++attempt) {
      req.attempt = attempt;
      if (attempt > 1) {
        ++stats_.retries;
        std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
        backoff *= policy_.backoff_factor;
      }
      limiter_.acquire();
      in_flight_.acquire();
      HttpResponse res;
      try {
        ++stats_.network_requests;
        res = transport_->get(url, headers, policy_.timeout_s);
      } catch (...) {
        in_flight_.release();
        throw;
      }
      in_flight_.release();

      if (res.status == 304 && cached) {
        ++stats_.not_modified;
        return std::move(cached->asset);
      }
      if (res.status == 200) {
        validate(req.coord, res.body);
        TileAsset asset{req.coord, std::move(res.body), res.content_type,
                        utc_timestamp(std::chrono::system_clock::now())};
        cache_.store(asset, res.etag, res.last_modified);
        return asset;
      }
      last_error = res.status == 0 ? res.error : "HTTP " + std::to_string(res.status);
      const bool retryable = res.status == 0 || res.status == 429 || res.status >= 500;
      if (!retryable) break;
    }
    throw FetchError("fetch failed for " + tmpl.redacted(req.coord) + " after " + std::to_string(req.attempt) +
                         " attempt(s): " + last_error,
                     req.attempt);
  }

  /// All grid x grid member tiles in row-major order. Requests are issued in
  /// row-major order by up to `concurrency` workers; completion order varies.
  std::vector<TileAsset> fetch_frame(const StitchFrame& frame, const std::string& url_template) {
    const int n = frame.grid() * frame.grid();
    std::vector<std::optional<TileAsset>> slots(static_cast<std::size_t>(n));
    std::vector<std::string> errors(static_cast<std::size_t>(n));
    std::atomic<int> next{0};
    auto worker = [&] {
      for (int k = next.fetch_add(1); k < n; k = next.fetch_add(1)) {
        TileRequest req{frame.tile(k / frame.grid(), k % frame.grid()), url_template, 0};
        try {
          slots[static_cast<std::size_t>(k)] = fetch_tile(req);
        } catch (const FetchError& e) {
          errors[static_cast<std::size_t>(k)] = e.what();
        } catch (const CorruptTileError& e) {
          errors[static_cast<std::size_t>(k)] = e.what();
        }
      }
    };
    {
      std::vector<std::jthread> pool;
      const int workers = std::min(policy_.concurrency, n);
      for (int w = 1; w < workers; ++w) pool.emplace_back(worker);
      worker();
    }
    std::vector<std::string> missing;
    std::string first_error;
    std::vector<TileAsset> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
      if (slots[static_cast<std::size_t>(k)]) {
        out.push_back(std::move(*slots[static_cast<std::size_t>(k)]));
      } else {
        missing.push_back(frame.tile(k / frame.grid(), k % frame.grid()).path_key());
        if (first_error.empty()) first_error = errors[static_cast<std::size_t>(k)];
      }
    }
    if (!missing.empty()) {
      std::string list;
      for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
      throw PartialFrameError("frame " + frame.key() + " missing " + std::to_string(missing.size()) +
                                  " tile(s): " + list + " (first error: " + first_error + ")",
                              std::move(missing));
    }
    return out;
  }

 private:
  void validate(const TileCoord& t, const std::string& bytes) const {
    Image img;
    try {
      img = decode_image(bytes);
    } catch (const FormatError& e) {
      throw CorruptTileError("tile " + t.path_key() + " payload does not decode: " + e.what());
    }
    if (img.width != policy_.tile_px || img.height != policy_.tile_px) {
      throw CorruptTileError("tile " + t.path_key() + " is " + std::to_string(img.width) + "x" +
                             std::to_string(img.height) + ", expected " + std::to_string(policy_.tile_px));
    }
  }

  FetchPolicy policy_;
  TileCache cache_;
  std::shared_ptr<HttpTransport> transport_;
  RateLimiter limiter_;
  Semaphore in_flight_;
  FetchStats stats_;
};

}  // namespace roadweave
