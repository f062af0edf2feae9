#pragma once

// Seeded random cropping of training patches from stored (image, mask) pairs.
//
// Generator: counter-based SplitMix64. Draw k of a run belongs to block
// b = k / block_size, handled by worker w = b % workers. The frame of block b
// comes from key(seed, w, "frame", b); the offsets of draw k from
// key(seed, w, "draw", k). Nothing depends on thread scheduling, so a
// (seed, workers, block_size) triple reproduces every PatchSpec exactly.

#include <roadweave/errors.hpp>
#include <roadweave/fs_util.hpp>
#include <roadweave/image.hpp>
#include <roadweave/mask_render.hpp>
#include <roadweave/parallel.hpp>
#include <roadweave/stitch_store.hpp>

#include <json.hpp>

#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <vector>

namespace roadweave {

inline constexpr int kDefaultPatchPx = 512;
inline constexpr int kDefaultSampleBlock = 64;
inline constexpr const char* kPatchSchema = "roadweave.patches/1";

/// Placements of a patch x patch window in a frame x frame raster, counting
/// both border positions: (frame - patch + 1)^2.
inline std::int64_t position_count(std::int64_t frame_size, std::int64_t patch) {
  if (patch <= 0 || frame_size <= 0) throw DomainError("sizes must be positive");
  if (patch > frame_size) throw DomainError("patch larger than frame");
  const std::int64_t side = frame_size - patch + 1;
  return side * side;
}

/// The exclusive-border count (frame - patch)^2, as quoted in the original
/// footnote (12,845,056 for 4096/512). Kept for reference only.
inline std::int64_t position_count_exclusive(std::int64_t frame_size, std::int64_t patch) {
  if (patch > frame_size) throw DomainError("patch larger than frame");
  const std::int64_t side = frame_size - patch;
  return side * side;
}

// ---------------------------------------------------------------------------
// Generator

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

inline constexpr std::uint64_t splitmix64(std::uint64_t z) noexcept {
  z += kGolden;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Substream key for a worker.
inline constexpr std::uint64_t stream_key(std::uint64_t seed, std::uint64_t worker) noexcept {
  return splitmix64(splitmix64(seed) ^ splitmix64(worker ^ 0x5157A3E5D0C0FFEEULL));
}

enum class DrawDomain : std::uint64_t { kFrame = 0xF4A3E, kOffset = 0x0FF5E7 };

/// Sequence of 64-bit values keyed by (stream, domain, index).
class CounterRng {
 public:
  constexpr CounterRng(std::uint64_t stream, DrawDomain domain, std::uint64_t index) noexcept
      : key_(splitmix64(stream ^ splitmix64(static_cast<std::uint64_t>(domain) * kGolden + index))) {}

  constexpr std::uint64_t next() noexcept { return splitmix64(key_ + (++counter_) * kGolden); }

  /// Uniform integer in [0, n) by multiply-shift with rejection.
  std::uint64_t bounded(std::uint64_t n) {
    if (n == 0) throw DomainError("empty range");
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const unsigned __int128 m = static_cast<unsigned __int128>(next()) * n;
      if (static_cast<std::uint64_t>(m) >= threshold) return static_cast<std::uint64_t>(m >> 64);
    }
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

// ---------------------------------------------------------------------------
// Plan

struct SampleParams {
  std::uint64_t seed = 0;
  std::int64_t n = 0;
  int patch_px = kDefaultPatchPx;
  int block = kDefaultSampleBlock;
  int workers = 1;  // substream count; part of the lineage, not a thread count
};

struct PatchSpec {
  std::int64_t index = 0;  // global draw index
  std::string key;         // frame key
  int top = 0;
  int left = 0;
  int size = kDefaultPatchPx;
  std::uint64_t seed = 0;
  int worker = 0;
  std::int64_t block = 0;
  friend bool operator==(const PatchSpec&, const PatchSpec&) = default;
};

/// Computes every PatchSpec for a run over `pool` (frame keys, in pool order)
/// whose frames are frame_size x frame_size.
inline std::vector<PatchSpec> plan_patches(std::span<const std::string> pool, int frame_size,
                                           const SampleParams& p) {
  if (p.n < 0) throw DomainError("patch count must be non-negative");
  if (p.block <= 0 || p.workers <= 0) throw DomainError("block size and worker count must be positive");
  if (p.n > 0 && pool.empty()) throw DomainError("cannot sample from an empty pool");
  const std::uint64_t side = static_cast<std::uint64_t>(frame_size - p.patch_px + 1);
  if (p.patch_px <= 0 || p.patch_px > frame_size) throw DomainError("patch larger than frame");
  std::vector<PatchSpec> out(static_cast<std::size_t>(p.n));
  std::string frame_key;
  for (std::int64_t k = 0; k < p.n; ++k) {
    const std::int64_t b = k / p.block;
    const int w = static_cast<int>(b % p.workers);
    const std::uint64_t stream = stream_key(p.seed, static_cast<std::uint64_t>(w));
    if (k % p.block == 0) {
      CounterRng frng(stream, DrawDomain::kFrame, static_cast<std::uint64_t>(b));
      frame_key = pool[frng.bounded(pool.size())];
    }
    CounterRng orng(stream, DrawDomain::kOffset, static_cast<std::uint64_t>(k));
    PatchSpec& s = out[static_cast<std::size_t>(k)];
    s.index = k;
    s.key = frame_key;
    s.top = static_cast<int>(orng.bounded(side));
    s.left = static_cast<int>(orng.bounded(side));
    s.size = p.patch_px;
    s.seed = p.seed;
    s.worker = w;
    s.block = b;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Materialization

struct FramePair {
  Image image;
  BinaryMask mask;
};

using FrameLoader = std::function<FramePair(const std::string& key)>;

/// Loads pairs referenced by a manifest from disk.
inline FrameLoader manifest_loader(std::span<const ManifestRecord> records, const fs::path& root) {
  auto index = std::make_shared<std::map<std::string, ManifestRecord>>();
  for (const auto& r : records) (*index)[r.key] = r;
  return [index, root](const std::string& key) {
    auto it = index->find(key);
    if (it == index->end()) throw IoError("frame " + key + " is not in the manifest");
    const fs::path ip = root / it->second.image;
    const fs::path mp = root / it->second.mask;
    if (!fs::exists(ip) || !fs::exists(mp)) throw IoError("frame " + key + " has no stored image/mask pair");
    FramePair p{decode_image(read_file(ip)), decode_mask_png(read_file(mp))};
    p.image = to_rgb(std::move(p.image));
    if (p.image.width != p.mask.width || p.image.height != p.mask.height) {
      throw FormatError("frame " + key + " image and mask sizes differ");
    }
    return p;
  };
}

struct PatchPair {
  Image image;
  BinaryMask mask;
  PatchSpec spec;
};

inline BinaryMask crop_mask(const BinaryMask& m, int top, int left, int w, int h) {
  if (top < 0 || left < 0 || top + h > m.height || left + w > m.width) throw DomainError("crop outside mask");
  BinaryMask out(w, h);
  for (int i = 0; i < h; ++i) {
    std::copy_n(m.pixels.begin() + static_cast<std::ptrdiff_t>(top + i) * m.width + left, w,
                out.pixels.begin() + static_cast<std::ptrdiff_t>(i) * w);
  }
  return out;
}

inline PatchPair cut_patch(const FramePair& f, const PatchSpec& s) {
  return {f.image.crop(s.top, s.left, s.size, s.size), crop_mask(f.mask, s.top, s.left, s.size, s.size), s};
}

/// Groups a plan into its blocks (consecutive draws sharing one frame load).
inline std::vector<std::span<const PatchSpec>> plan_blocks(std::span<const PatchSpec> plan) {
  std::vector<std::span<const PatchSpec>> out;
  std::size_t start = 0;
  for (std::size_t k = 1; k <= plan.size(); ++k) {
    if (k == plan.size() || plan[k].block != plan[start].block) {
      out.push_back(plan.subspan(start, k - start));
      start = k;
    }
  }
  return out;
}

/// Streams patches block by block: one frame load per block, `fn` called in
/// draw order within a block. Blocks run concurrently on `jobs` threads.
inline void sample_patches(std::span<const PatchSpec> plan, const FrameLoader& load, int jobs,
                           const std::function<void(PatchPair&&)>& fn) {
  const auto blocks = plan_blocks(plan);
  parallel_for(blocks.size(), jobs, [&](std::size_t b) {
    const FramePair frame = load(blocks[b].front().key);
    for (const auto& s : blocks[b]) fn(cut_patch(frame, s));
  });
}

// ---------------------------------------------------------------------------
// Export

inline nlohmann::ordered_json to_json(const PatchSpec& s) {
  return {{"k", s.index}, {"key", s.key}, {"top", s.top}, {"left", s.left}, {"size", s.size},
          {"seed", s.seed}, {"worker", s.worker}, {"block", s.block},
          {"image", "img_" + std::to_string(s.index) + ".png"},
          {"mask", "msk_" + std::to_string(s.index) + ".png"}};
}

struct ExportResult {
  std::int64_t patches = 0;
  std::int64_t frames_loaded = 0;
  fs::path manifest;
};

/// Writes img_{k}.png / msk_{k}.png pairs and patches.jsonl (header line then
/// one line per PatchSpec). A failing block removes the files it created.
inline ExportResult export_patches(std::span<const PatchSpec> plan, const FrameLoader& load, const fs::path& out_dir,
                                   const RunHeader& header, int jobs = 1, bool force = false) {
  fs::create_directories(out_dir);
  const auto blocks = plan_blocks(plan);
  std::atomic<std::int64_t> loads{0};
  parallel_for(blocks.size(), jobs, [&](std::size_t b) {
    const FramePair frame = load(blocks[b].front().key);
    ++loads;
    std::vector<fs::path> created;
    try {
      for (const auto& s : blocks[b]) {
        const PatchPair p = cut_patch(frame, s);
        const fs::path ip = out_dir / ("img_" + std::to_string(s.index) + ".png");
        const fs::path mp = out_dir / ("msk_" + std::to_string(s.index) + ".png");
        for (const auto& [path, bytes] : {std::pair{ip, encode_png(p.image)}, std::pair{mp, encode_mask_png(p.mask)}}) {
          const bool existed = fs::exists(path);
          write_artifact(path, bytes, force);
          if (!existed) created.push_back(path);
        }
      }
    } catch (...) {
      std::error_code ec;
      for (const auto& path : created) fs::remove(path, ec);
      throw;
    }
  });
  std::string text = header.to_json(kPatchSchema).dump() + "\n";
  for (const auto& s : plan) text += to_json(s).dump() + "\n";
  const fs::path manifest = out_dir / "patches.jsonl";
  write_artifact(manifest, text, force);
  return {static_cast<std::int64_t>(plan.size()), loads.load(), manifest};
}

}  // namespace roadweave
