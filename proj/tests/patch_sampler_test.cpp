#include <roadweave/patch_sampler.hpp>

#include <gtest/gtest.h>

#include <boost/math/distributions/chi_squared.hpp>

#include <random>

#include "temp_dir.hpp"

using namespace roadweave;
using testing_support::TempDir;

namespace {

// Frames whose pixels encode their own coordinates, so any crop can be checked
// against the source position.
FramePair coordinate_frame(int size, int salt) {
  FramePair f{Image(size, size, 3), BinaryMask(size, size)};
  for (int i = 0; i < size; ++i) {
    for (int j = 0; j < size; ++j) {
      auto* p = f.image.px(i, j);
      p[0] = static_cast<std::uint8_t>(i);
      p[1] = static_cast<std::uint8_t>(j);
      p[2] = static_cast<std::uint8_t>(salt + (i >> 8) * 16 + (j >> 8));
      f.mask.pixels[static_cast<std::size_t>(i) * size + j] = ((i * 7 + j * 3 + salt) % 5) == 0;
    }
  }
  return f;
}

struct CountingLoader {
  int size;
  std::shared_ptr<std::atomic<int>> loads = std::make_shared<std::atomic<int>>(0);
  FrameLoader loader() const {
    return [size = size, loads = loads](const std::string& key) {
      ++*loads;
      return coordinate_frame(size, static_cast<int>(std::hash<std::string>{}(key) % 7));
    };
  }
};

const std::vector<std::string> kPool{"18_0_0", "18_16_0", "18_32_0", "18_48_0"};

}  // namespace

TEST(PositionCount, Examples) {
  EXPECT_EQ(position_count(4096, 4096), 1);
  EXPECT_EQ(position_count(4096, 512), 3585LL * 3585LL);
  EXPECT_EQ(position_count(4096, 512), 12852225);
  EXPECT_EQ(position_count_exclusive(4096, 512), 12845056);
  EXPECT_EQ(position_count(513, 512), 4);
  EXPECT_THROW(position_count(512, 513), DomainError);
}

TEST(CounterRng, BoundedStaysInRangeAndIsKeyed) {
  CounterRng a(stream_key(1, 0), DrawDomain::kOffset, 5);
  CounterRng b(stream_key(1, 0), DrawDomain::kOffset, 5);
  CounterRng c(stream_key(1, 1), DrawDomain::kOffset, 5);
  bool differs = false;
  for (int i = 0; i < 1000; ++i) {
    const auto x = a.bounded(3585);
    EXPECT_LT(x, 3585u);
    EXPECT_EQ(x, b.bounded(3585));
    differs |= x != c.bounded(3585);
  }
  EXPECT_TRUE(differs);
}

TEST(PlanPatches, SameSeedSamePlan) {
  SampleParams p{.seed = 42, .n = 1};
  EXPECT_EQ(plan_patches(kPool, 4096, p), plan_patches(kPool, 4096, p));
  p.n = 500;
  p.workers = 3;
  const auto a = plan_patches(kPool, 4096, p);
  EXPECT_EQ(a, plan_patches(kPool, 4096, p));
  p.seed = 43;
  EXPECT_NE(a, plan_patches(kPool, 4096, p));
}

TEST(PlanPatches, PrefixStableAndLineageRecorded) {
  SampleParams p{.seed = 7, .n = 300, .block = 16, .workers = 4};
  const auto full = plan_patches(kPool, 1024, p);
  p.n = 100;
  const auto prefix = plan_patches(kPool, 1024, p);
  EXPECT_TRUE(std::equal(prefix.begin(), prefix.end(), full.begin()));
  for (const auto& s : full) {
    EXPECT_EQ(s.block, s.index / 16);
    EXPECT_EQ(s.worker, s.block % 4);
    EXPECT_GE(s.top, 0);
    EXPECT_LE(s.top, 1024 - 512);
    EXPECT_LE(s.left, 1024 - 512);
    EXPECT_EQ(s.key, full[static_cast<std::size_t>(s.block * 16)].key);
  }
}

TEST(PlanPatches, OffsetsUniformOverSevenBySevenGrid) {
  const std::vector<std::string> one{"18_0_0"};
  const auto plan = plan_patches(one, 4096, {.seed = 2024, .n = 1000000});
  const int side = 3585;
  std::array<std::int64_t, 49> counts{};
  for (const auto& s : plan) counts[static_cast<std::size_t>((s.top * 7 / side) * 7 + s.left * 7 / side)]++;
  // Expected mass per cell follows the exact integer cell widths.
  std::array<double, 7> width{};
  for (int v = 0; v < side; ++v) width[static_cast<std::size_t>(v * 7 / side)] += 1.0;
  double chi2 = 0.0;
  for (int r = 0; r < 7; ++r) {
    for (int c = 0; c < 7; ++c) {
      const double e = 1e6 * width[r] * width[c] / (double(side) * side);
      const double d = counts[static_cast<std::size_t>(r * 7 + c)] - e;
      chi2 += d * d / e;
    }
  }
  const double p = boost::math::cdf(boost::math::complement(boost::math::chi_squared(48), chi2));
  EXPECT_GT(p, 0.001) << "chi2=" << chi2;
}

TEST(SamplePatches, CropsAlignWithSourceAndLoadsPerBlock) {
  CountingLoader cl{1024};
  const auto plan = plan_patches(kPool, 1024, {.seed = 5, .n = 130, .patch_px = 256, .block = 64});
  std::mutex m;
  std::vector<PatchPair> got;
  sample_patches(plan, cl.loader(), 2, [&](PatchPair&& p) {
    std::lock_guard lock(m);
    got.push_back(std::move(p));
  });
  EXPECT_EQ(cl.loads->load(), 3);  // ceil(130 / 64)
  ASSERT_EQ(got.size(), 130u);
  for (const auto& p : got) {
    const FramePair src = coordinate_frame(1024, static_cast<int>(std::hash<std::string>{}(p.spec.key) % 7));
    EXPECT_EQ(p.image, src.image.crop(p.spec.top, p.spec.left, 256, 256));
    for (int i = 0; i < 256; i += 17) {
      for (int j = 0; j < 256; j += 13) {
        ASSERT_EQ(p.mask.at(i, j), src.mask.at(p.spec.top + i, p.spec.left + j));
      }
    }
  }
}

TEST(ExportPatches, ZeroPatchesGivesEmptyManifest) {
  TempDir dir;
  CountingLoader cl{1024};
  const auto r = export_patches({}, cl.loader(), dir.path(), RunHeader{});
  EXPECT_EQ(r.patches, 0);
  const std::string text = read_file(r.manifest);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 1);  // header only
}

TEST(ExportPatches, HundredPatchesTwoHundredFiles) {
  TempDir dir;
  CountingLoader cl{1024};
  const auto plan = plan_patches(kPool, 1024, {.seed = 9, .n = 100, .patch_px = 128, .block = 10});
  const auto r = export_patches(plan, cl.loader(), dir.path(), RunHeader{}, 2);
  EXPECT_EQ(r.frames_loaded, 10);
  int files = 0;
  for (const auto& e : fs::directory_iterator(dir.path())) files += e.path().extension() == ".png";
  EXPECT_EQ(files, 200);
  const std::string text = read_file(r.manifest);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 101);
  const auto m = decode_png(read_file(dir.path() / "msk_0.png"));
  EXPECT_EQ(m.channels, 1);
  for (auto v : m.data) EXPECT_TRUE(v == 0 || v == 255);
}

TEST(ExportPatches, ReexportIsByteIdentical) {
  TempDir a, b;
  CountingLoader cl{1024};
  const auto plan = plan_patches(kPool, 1024, {.seed = 77, .n = 20, .patch_px = 128, .block = 4, .workers = 2});
  export_patches(plan, cl.loader(), a.path(), RunHeader{"v", "c", 77}, 1);
  export_patches(plan, cl.loader(), b.path(), RunHeader{"v", "c", 77}, 3);
  for (const auto& e : fs::directory_iterator(a.path())) {
    EXPECT_EQ(sha256_hex(read_file(e.path())), sha256_hex(read_file(b.path() / e.path().filename())))
        << e.path().filename();
  }
  // Same target again: identical content is a no-op, not a clobber.
  EXPECT_NO_THROW(export_patches(plan, cl.loader(), a.path(), RunHeader{"v", "c", 77}, 1));
}

TEST(ExportPatches, FailedBlockLeavesNoPartialFiles) {
  TempDir dir;
  const auto plan = plan_patches(kPool, 512, {.seed = 1, .n = 8, .patch_px = 64, .block = 8});
  // A pre-existing different file makes the 4th write of the block clobber-fail.
  write_file_atomic(dir.path() / "msk_1.png", "occupied");
  CountingLoader cl{512};
  EXPECT_THROW(export_patches(plan, cl.loader(), dir.path(), RunHeader{}), ClobberError);
  EXPECT_FALSE(fs::exists(dir.path() / "img_0.png"));
  EXPECT_FALSE(fs::exists(dir.path() / "img_1.png"));
  EXPECT_TRUE(fs::exists(dir.path() / "msk_1.png"));
  EXPECT_FALSE(fs::exists(dir.path() / "patches.jsonl"));
}

TEST(ManifestLoader, MissingFrameNamesKey) {
  TempDir dir;
  ManifestRecord r;
  r.key = "18_0_0";
  r.image = "images/18_0_0.png";
  r.mask = "masks/18_0_0.png";
  const auto load = manifest_loader(std::vector<ManifestRecord>{r}, dir.path());
  try {
    load("18_0_0");
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("18_0_0"), std::string::npos);
  }
  EXPECT_THROW(load("18_16_16"), IoError);
}
