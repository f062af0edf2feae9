#include <roadweave/stitch_store.hpp>

#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include "oracles.hpp"
#include "stub_tile_server.hpp"
#include "temp_dir.hpp"

using namespace roadweave;
using testing_support::TempDir;

namespace {

TileAsset solid_tile(const TileCoord& t, int tile_px, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  Image img(tile_px, tile_px, 3);
  for (int i = 0; i < tile_px; ++i) {
    for (int j = 0; j < tile_px; ++j) {
      img.px(i, j)[0] = r;
      img.px(i, j)[1] = g;
      img.px(i, j)[2] = b;
    }
  }
  return {t, encode_png(img), "image/png", "2020-01-01T00:00:00Z"};
}

std::vector<TileAsset> pattern_assets(const StitchFrame& f) {
  std::vector<TileAsset> out;
  for (int r = 0; r < f.grid(); ++r) {
    for (int c = 0; c < f.grid(); ++c) {
      const TileCoord t = f.tile(r, c);
      out.push_back({t, encode_png(testing_support::tile_image(t, f.tile_px())), "image/png", ""});
    }
  }
  return out;
}

FrameExtract horizontal_road_extract(const StitchFrame& f, double row) {
  FrameExtract ex;
  ex.frame = f;
  ex.source_digest = "feed";
  RoadWay w;
  w.id = 1;
  w.road_class = {RoadTier::kMain, 15};
  w.highway_tag = "motorway";
  w.polyline = {frame_to_geo({-40.0, row}, f), frame_to_geo({f.size_px() + 40.0, row}, f)};
  ex.ways.push_back(w);
  return ex;
}

}  // namespace

TEST(StitchImage, SolidBlocksLandInTheirCells) {
  const StitchFrame f(TileCoord{18, 64, 128}, 4, 256);
  std::vector<TileAsset> assets;
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      assets.push_back(solid_tile(f.tile(r, c), 256, static_cast<std::uint8_t>(r * 60),
                                  static_cast<std::uint8_t>(c * 60), 7));
    }
  }
  std::shuffle(assets.begin(), assets.end(), std::mt19937(3));
  const Image img = stitch_image(assets, f);
  ASSERT_EQ(img.width, 1024);
  for (int i = 0; i < 1024; ++i) {
    for (int j = 0; j < 1024; ++j) {
      const auto* p = img.px(i, j);
      ASSERT_EQ(p[0], (i / 256) * 60);
      ASSERT_EQ(p[1], (j / 256) * 60);
      ASSERT_EQ(p[2], 7);
    }
  }
}

TEST(StitchImage, SingleTileFrameIsIdentity) {
  const StitchFrame f(TileCoord{18, 5, 9}, 1, 256);
  const auto assets = pattern_assets(f);
  EXPECT_EQ(stitch_image(assets, f), testing_support::tile_image(f.origin(), 256));
}

TEST(StitchImage, MarkedCornersAppearAtTileOrigins) {
  const StitchFrame f(TileCoord{18, 160, 320});
  const auto assets = pattern_assets(f);
  const Image img = stitch_image(assets, f, 2);
  for (int r = 0; r < 16; ++r) {
    for (int c = 0; c < 16; ++c) {
      const auto* p = img.px(r * 256, c * 256);
      EXPECT_EQ(p[0], 255);
      EXPECT_EQ(p[1], 0);
      const Image expect = testing_support::tile_image(f.tile(r, c), 256);
      EXPECT_EQ(img.px(r * 256 + 255, c * 256 + 255)[1], expect.px(255, 255)[1]);
    }
  }
}

TEST(StitchImage, MissingTilesAreNamed) {
  const StitchFrame f(TileCoord{18, 0, 0}, 2, 256);
  auto assets = pattern_assets(f);
  assets.erase(assets.begin() + 3);
  try {
    stitch_image(assets, f);
    FAIL();
  } catch (const PartialFrameError& e) {
    ASSERT_EQ(e.missing().size(), 1u);
    EXPECT_EQ(e.missing()[0], "18/1/1");
  }
}

TEST(StitchImage, ForeignOrCorruptTilesAreRejected) {
  const StitchFrame f(TileCoord{18, 0, 0}, 2, 256);
  auto assets = pattern_assets(f);
  assets.push_back(solid_tile({18, 2, 0}, 256, 0, 0, 0));
  EXPECT_THROW(stitch_image(assets, f), DomainError);
  assets.pop_back();
  assets[0].bytes = "garbage";
  EXPECT_THROW(stitch_image(assets, f), CorruptTileError);
}

TEST(MaskPng, RoundTripsAndUses255) {
  BinaryMask m(7, 5);
  m.pixels[3] = 1;
  m.pixels[34] = 1;
  const std::string png = encode_mask_png(m);
  const Image raw = decode_png(png);
  EXPECT_EQ(raw.channels, 1);
  EXPECT_EQ(raw.data[3], 255);
  EXPECT_EQ(raw.data[0], 0);
  EXPECT_EQ(decode_mask_png(png), m);
}

TEST(Manifest, RecordsRoundTrip) {
  ManifestRecord r;
  r.key = "18_16_32";
  r.z = 18;
  r.x = 16;
  r.y = 32;
  r.bounds = StitchFrame(TileCoord{18, 16, 32}).bounds();
  r.density = 0.1 + 0.2;
  r.road_pixels = 12345;
  r.image = "images/18_16_32.png";
  r.mask = "masks/18_16_32.png";
  r.digest = "abc";
  r.created_at = "1970-01-01T00:00:00Z";
  ManifestRecord s = r;
  s.key = "18_32_32";
  s.x = 32;
  s.density = 1.0 / 3.0;
  const std::vector<ManifestRecord> recs{r, s};
  EXPECT_EQ(parse_records(serialize_records(recs)), recs);
}

TEST(Manifest, TornTailIsIgnoredAndRepaired) {
  TempDir dir;
  const fs::path p = dir.path() / "manifest.jsonl";
  ManifestRecord r;
  r.key = "18_0_0";
  r.z = 18;
  {
    Manifest m(p, RunHeader{"0.1.0", "cfg", 1});
    m.append(r);
  }
  {
    std::ofstream out(p, std::ios::app | std::ios::binary);
    out << R"({"schema":"roadweave.manifest/1","kind":"pair","key":"18_16)";
  }
  EXPECT_EQ(read_manifest(p).size(), 1u);
  Manifest m(p, RunHeader{"0.1.0", "cfg", 1});
  EXPECT_EQ(m.records().size(), 1u);
  const std::string text = read_file(p);
  EXPECT_EQ(text.back(), '\n');
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 2);
}

TEST(Manifest, DuplicateKeyIsRejected) {
  TempDir dir;
  Manifest m(dir.path() / "manifest.jsonl", RunHeader{});
  ManifestRecord r;
  r.key = "18_0_0";
  m.append(r);
  EXPECT_THROW(m.append(r), DuplicateKeyError);
}

TEST(Manifest, HeaderWrittenOncePerConfiguration) {
  TempDir dir;
  const fs::path p = dir.path() / "manifest.jsonl";
  { Manifest m(p, RunHeader{"v", "a", 1}); }
  { Manifest m(p, RunHeader{"v", "a", 1}); }
  std::string text = read_file(p);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 1);
  { Manifest m(p, RunHeader{"v", "b", 1}); }
  text = read_file(p);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 2);
}

TEST(BuildPair, EmptyExtractHasZeroDensity) {
  TempDir dir;
  const StitchFrame f(TileCoord{18, 1024, 1024}, 2, 256);
  FrameExtract ex;
  ex.frame = f;
  Manifest m(dir.path() / "manifest.jsonl", RunHeader{});
  const auto pair = build_pair(f, pattern_assets(f), ex, dir.path(), m);
  EXPECT_EQ(pair.density, 0.0);
  EXPECT_EQ(decode_mask_png(read_file(pair.mask_path)).count(), 0);
}

TEST(BuildPair, DensityMatchesBruteForceMask) {
  TempDir dir;
  const StitchFrame f(TileCoord{18, 1024, 1024}, 2, 256);
  const FrameExtract ex = horizontal_road_extract(f, 200.5);
  Manifest m(dir.path() / "manifest.jsonl", RunHeader{});
  const auto pair = build_pair(f, pattern_assets(f), ex, dir.path(), m);
  const PixelCoord a = project_to_frame(ex.ways[0].polyline[0], f);
  const PixelCoord b = project_to_frame(ex.ways[0].polyline[1], f);
  const auto oracle_mask = oracle::brute_force_mask({{{a.px, a.py}, {b.px, b.py}, 15.0}}, 512, 512);
  std::int64_t expect = 0;
  for (auto v : oracle_mask) expect += v;
  EXPECT_EQ(expect, 15 * 512);
  EXPECT_EQ(pair.road_pixels, expect);
  EXPECT_EQ(pair.density, static_cast<double>(expect) / (512.0 * 512.0));
  const BinaryMask stored = decode_mask_png(read_file(pair.mask_path));
  EXPECT_EQ(stored.count(), expect);
  EXPECT_EQ(decode_png(read_file(pair.image_path)), stitch_image(pattern_assets(f), f));
  const auto rec = m.find(f.key());
  ASSERT_TRUE(rec);
  EXPECT_EQ(rec->mask_sha256, sha256_hex(read_file(pair.mask_path)));
  EXPECT_EQ(rec->bounds, f.bounds());
}

TEST(BuildPair, RerunIsByteIdenticalNoOp) {
  TempDir dir;
  const StitchFrame f(TileCoord{18, 1024, 1024}, 2, 256);
  const FrameExtract ex = horizontal_road_extract(f, 77.0);
  const fs::path mp = dir.path() / "manifest.jsonl";
  {
    Manifest m(mp, RunHeader{});
    build_pair(f, pattern_assets(f), ex, dir.path(), m, {.created_at = "t0"});
  }
  const std::string before = read_file(mp);
  const auto mtime = fs::last_write_time(dir.path() / "masks/18_1024_1024.png");
  {
    Manifest m(mp, RunHeader{});
    build_pair(f, pattern_assets(f), ex, dir.path(), m, {.created_at = "t1"});
  }
  EXPECT_EQ(read_file(mp), before);
  EXPECT_EQ(fs::last_write_time(dir.path() / "masks/18_1024_1024.png"), mtime);
}

TEST(BuildPair, ChangedContentNeedsForce) {
  TempDir dir;
  const StitchFrame f(TileCoord{18, 1024, 1024}, 2, 256);
  Manifest m(dir.path() / "manifest.jsonl", RunHeader{});
  build_pair(f, pattern_assets(f), horizontal_road_extract(f, 77.0), dir.path(), m);
  EXPECT_THROW(build_pair(f, pattern_assets(f), horizontal_road_extract(f, 300.0), dir.path(), m),
               DuplicateKeyError);
  const auto pair =
      build_pair(f, pattern_assets(f), horizontal_road_extract(f, 300.0), dir.path(), m, {.force = true, .created_at = ""});
  EXPECT_EQ(m.records().size(), 1u);
  EXPECT_EQ(m.find(f.key())->mask_sha256, sha256_hex(read_file(pair.mask_path)));
  EXPECT_EQ(read_manifest(m.path()).size(), 1u);
}
