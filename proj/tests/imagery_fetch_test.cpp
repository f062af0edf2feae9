#include <roadweave/imagery_fetch.hpp>

#include <gtest/gtest.h>

#include <chrono>
#include <cstdlib>

#include "stub_tile_server.hpp"
#include "temp_dir.hpp"

using namespace roadweave;
using testing_support::StubTileServer;
using testing_support::TempDir;

namespace {

FetchPolicy fast_policy() {
  FetchPolicy p;
  p.rate_per_s = 0.0;
  p.concurrency = 4;
  p.timeout_s = 5.0;
  p.max_attempts = 3;
  p.backoff_initial_s = 0.01;
  return p;
}

}  // namespace

TEST(UrlTemplate, ValidatesPlaceholders) {
  EXPECT_THROW(UrlTemplate("http://h/{z}/{x}.png"), DomainError);
  EXPECT_THROW(UrlTemplate("http://h/{z}/{x}/{y}/{y}.png"), DomainError);
  EXPECT_THROW(UrlTemplate("ftp://h/{z}/{x}/{y}"), DomainError);
  const UrlTemplate t("https://h/{z}/{x}/{y}.jpg?token={key}");
  EXPECT_TRUE(t.needs_key());
  EXPECT_EQ(t.expand({18, 1, 2}, "s3cret"), "https://h/18/1/2.jpg?token=s3cret");
  EXPECT_EQ(t.redacted({18, 1, 2}), "https://h/18/1/2.jpg?token=***");
}

TEST(FetchTile, DownloadsValidatesAndCaches) {
  StubTileServer server;
  TempDir dir;
  TileFetcher fetcher(fast_policy(), dir.path());
  TileRequest req{{18, 100, 200}, server.url_template()};
  const TileAsset a = fetcher.fetch_tile(req);
  EXPECT_EQ(req.attempt, 1);
  EXPECT_EQ(a.content_type, "image/png");
  EXPECT_EQ(decode_image(a.bytes), testing_support::tile_image({18, 100, 200}, 256));
  EXPECT_TRUE(fs::exists(dir.path() / "tiles/18/100/200.json"));
  EXPECT_TRUE(fs::exists(dir.path() / "index.jsonl"));
}

TEST(FetchTile, CachedTileNeedsNoNetwork) {
  StubTileServer server;
  TempDir dir;
  {
    TileFetcher warm(fast_policy(), dir.path());
    TileRequest req{{18, 1, 1}, server.url_template()};
    warm.fetch_tile(req);
  }
  const int before = server.requests();
  TileFetcher fetcher(fast_policy(), dir.path());
  TileRequest req{{18, 1, 1}, server.url_template()};
  const TileAsset a = fetcher.fetch_tile(req);
  EXPECT_EQ(server.requests(), before);
  EXPECT_EQ(fetcher.stats().network_requests.load(), 0);
  EXPECT_EQ(req.attempt, 0);
  EXPECT_FALSE(a.fetched_at.empty());
}

TEST(FetchTile, RetriesAfter503) {
  StubTileServer server;
  server.script("18/5/5", {503, 200});
  TempDir dir;
  TileFetcher fetcher(fast_policy(), dir.path());
  TileRequest req{{18, 5, 5}, server.url_template()};
  fetcher.fetch_tile(req);
  EXPECT_EQ(req.attempt, 2);
  EXPECT_EQ(server.requests(), 2);
}

TEST(FetchTile, PermanentFailureStopsAtMaxAttempts) {
  StubTileServer server;
  server.kill("18/5/6");
  TempDir dir;
  TileFetcher fetcher(fast_policy(), dir.path());
  TileRequest req{{18, 5, 6}, server.url_template()};
  try {
    fetcher.fetch_tile(req);
    FAIL();
  } catch (const FetchError& e) {
    EXPECT_EQ(e.attempts(), 3);
  }
  EXPECT_EQ(server.requests(), 3);
}

TEST(FetchTile, NotFoundIsNotRetried) {
  StubTileServer server;
  server.script("18/5/7", {404, 404, 404});
  TempDir dir;
  TileFetcher fetcher(fast_policy(), dir.path());
  TileRequest req{{18, 5, 7}, server.url_template()};
  EXPECT_THROW(fetcher.fetch_tile(req), FetchError);
  EXPECT_EQ(server.requests(), 1);
}

TEST(FetchTile, CorruptPayloadIsNotCached) {
  StubTileServer server;
  server.corrupt("18/9/9");
  TempDir dir;
  TileFetcher fetcher(fast_policy(), dir.path());
  TileRequest req{{18, 9, 9}, server.url_template()};
  EXPECT_THROW(fetcher.fetch_tile(req), CorruptTileError);
  EXPECT_FALSE(fetcher.cache().load({18, 9, 9}));
}

TEST(FetchTile, WrongTileSizeIsCorrupt) {
  StubTileServer server(128);
  TempDir dir;
  TileFetcher fetcher(fast_policy(), dir.path());
  TileRequest req{{18, 9, 9}, server.url_template()};
  EXPECT_THROW(fetcher.fetch_tile(req), CorruptTileError);
}

TEST(FetchTile, OfflineMissIsImmediateError) {
  TempDir dir;
  FetchPolicy p = fast_policy();
  p.offline = true;
  TileFetcher fetcher(p, dir.path());
  TileRequest req{{18, 1, 2}, "http://127.0.0.1:1/{z}/{x}/{y}.png"};
  EXPECT_THROW(fetcher.fetch_tile(req), FetchError);
  EXPECT_EQ(fetcher.stats().network_requests.load(), 0);
}

TEST(FetchTile, KeyComesFromEnvironment) {
  StubTileServer server;
  TempDir dir;
  TileFetcher fetcher(fast_policy(), dir.path());
  const std::string tmpl = server.url_template() + "?k={key}";
  ::unsetenv(kTileKeyEnv);
  TileRequest req{{18, 3, 3}, tmpl};
  EXPECT_THROW(fetcher.fetch_tile(req), FetchError);
  ::setenv(kTileKeyEnv, "abc", 1);
  TileRequest req2{{18, 3, 3}, tmpl};
  EXPECT_NO_THROW(fetcher.fetch_tile(req2));
  ::unsetenv(kTileKeyEnv);
}

TEST(FetchTile, RevalidationUsesConditionalRequest) {
  StubTileServer server;
  server.set_etag(true);
  TempDir dir;
  {
    TileFetcher warm(fast_policy(), dir.path());
    TileRequest req{{18, 4, 4}, server.url_template()};
    warm.fetch_tile(req);
  }
  FetchPolicy p = fast_policy();
  p.revalidate = true;
  TileFetcher fetcher(p, dir.path());
  TileRequest req{{18, 4, 4}, server.url_template()};
  const TileAsset a = fetcher.fetch_tile(req);
  EXPECT_EQ(server.not_modified(), 1);
  EXPECT_EQ(decode_image(a.bytes), testing_support::tile_image({18, 4, 4}, 256));
}

TEST(TileCache, TruncatedPayloadNeverValidates) {
  TempDir dir;
  TileCache cache(dir.path());
  const std::string png = encode_png(testing_support::tile_image({18, 1, 1}, 256));
  cache.store({{18, 1, 1}, png, "image/png", "2020-01-01T00:00:00Z"});
  ASSERT_TRUE(cache.load({18, 1, 1}));
  const fs::path obj = cache.object_path(sha256_hex(png));
  write_file_atomic(obj, png.substr(0, png.size() / 2));
  EXPECT_FALSE(cache.load({18, 1, 1}));
}

TEST(FetchFrame, FullFrameIsRowMajor) {
  StubTileServer server;
  TempDir dir;
  TileFetcher fetcher(fast_policy(), dir.path());
  const StitchFrame frame(TileCoord{18, 160, 320});
  const auto assets = fetcher.fetch_frame(frame, server.url_template());
  ASSERT_EQ(assets.size(), 256u);
  for (int k = 0; k < 256; ++k) EXPECT_EQ(assets[k].coord, frame.tile(k / 16, k % 16));
  EXPECT_LE(server.max_in_flight(), 4);

  // Warm cache: zero network operations.
  const int before = server.requests();
  TileFetcher again(fast_policy(), dir.path());
  EXPECT_EQ(again.fetch_frame(frame, server.url_template()).size(), 256u);
  EXPECT_EQ(server.requests(), before);
  EXPECT_EQ(again.stats().network_requests.load(), 0);
}

TEST(FetchFrame, DeadTileNamedInPartialFrameError) {
  StubTileServer server;
  server.kill("18/163/325");
  TempDir dir;
  TileFetcher fetcher(fast_policy(), dir.path());
  try {
    fetcher.fetch_frame(StitchFrame(TileCoord{18, 160, 320}), server.url_template());
    FAIL();
  } catch (const PartialFrameError& e) {
    ASSERT_EQ(e.missing().size(), 1u);
    EXPECT_EQ(e.missing()[0], "18/163/325");
  }
}

TEST(FetchFrame, InFlightCapHolds) {
  StubTileServer server;
  server.set_delay(std::chrono::milliseconds(15));
  TempDir dir;
  FetchPolicy p = fast_policy();
  p.concurrency = 3;
  TileFetcher fetcher(p, dir.path());
  fetcher.fetch_frame(StitchFrame(TileCoord{18, 0, 0}, 4, 256), server.url_template());
  EXPECT_LE(server.max_in_flight(), 3);
  EXPECT_GE(server.max_in_flight(), 2);
}

TEST(FetchFrame, RateLimitSpacesRequests) {
  StubTileServer server;
  TempDir dir;
  FetchPolicy p = fast_policy();
  p.rate_per_s = 50.0;
  p.concurrency = 8;
  TileFetcher fetcher(p, dir.path());
  const auto t0 = std::chrono::steady_clock::now();
  fetcher.fetch_frame(StitchFrame(TileCoord{18, 0, 0}, 4, 256), server.url_template());
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_GE(secs, 16 / 50.0);
  // No one-second window (here scaled: any 5 consecutive arrivals) is faster
  // than the rate allows, beyond scheduling jitter.
  const auto arrivals = server.arrivals();
  ASSERT_EQ(arrivals.size(), 16u);
  for (std::size_t i = 5; i < arrivals.size(); ++i) {
    EXPECT_GE(std::chrono::duration<double>(arrivals[i] - arrivals[i - 5]).count(), 5 / 50.0 - 0.01);
  }
}

TEST(FetchFrameSlow, TenPerSecondFor256Tiles) {
  StubTileServer server;
  TempDir dir;
  FetchPolicy p = fast_policy();
  p.rate_per_s = 10.0;
  p.concurrency = 8;
  TileFetcher fetcher(p, dir.path());
  const auto t0 = std::chrono::steady_clock::now();
  EXPECT_EQ(fetcher.fetch_frame(StitchFrame(TileCoord{18, 16, 16}), server.url_template()).size(), 256u);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_GE(secs, 25.6);
}
