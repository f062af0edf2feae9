#pragma once

// Tile stitching, (image, mask) pair persistence and the line-delimited
// manifest that indexes stored pairs.

#include <roadweave/digest.hpp>
#include <roadweave/errors.hpp>
#include <roadweave/fs_util.hpp>
#include <roadweave/image.hpp>
#include <roadweave/imagery_fetch.hpp>
#include <roadweave/mask_render.hpp>
#include <roadweave/osm_ingest.hpp>
#include <roadweave/parallel.hpp>
#include <roadweave/tile_geometry.hpp>

#include <json.hpp>

#include <cstring>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <fcntl.h>
#include <unistd.h>

namespace roadweave {

inline constexpr const char* kManifestSchema = "roadweave.manifest/1";

/// Places tile (r, c) of the frame at pixel block [r*tile_px, (r+1)*tile_px)
/// x [c*tile_px, (c+1)*tile_px). No resampling; gray tiles are replicated to
/// RGB. Missing member tiles raise PartialFrameError naming them.
inline Image stitch_image(std::span<const TileAsset> assets, const StitchFrame& frame, int jobs = 1) {
  const int g = frame.grid();
  const int tp = frame.tile_px();
  std::vector<const TileAsset*> slot(static_cast<std::size_t>(g) * g, nullptr);
  for (const auto& a : assets) {
    const std::int64_t r = a.coord.y - frame.origin().y;
    const std::int64_t c = a.coord.x - frame.origin().x;
    if (a.coord.z != frame.origin().z || r < 0 || c < 0 || r >= g || c >= g) {
      throw DomainError("tile " + a.coord.path_key() + " is not part of frame " + frame.key());
    }
    slot[static_cast<std::size_t>(r * g + c)] = &a;
  }
  std::vector<std::string> missing;
  for (int k = 0; k < g * g; ++k) {
    if (!slot[static_cast<std::size_t>(k)]) missing.push_back(frame.tile(k / g, k % g).path_key());
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw PartialFrameError("cannot stitch frame " + frame.key() + ", missing tile(s): " + list,
                            std::move(missing));
  }
  Image out(frame.size_px(), frame.size_px(), 3);
  parallel_for(slot.size(), jobs, [&](std::size_t k) {
    const TileAsset& a = *slot[k];
    Image tile;
    try {
      tile = to_rgb(decode_image(a.bytes));
    } catch (const FormatError& e) {
      throw CorruptTileError("tile " + a.coord.path_key() + ": " + e.what());
    }
    if (tile.width != tp || tile.height != tp) {
      throw CorruptTileError("tile " + a.coord.path_key() + " has wrong size");
    }
    const int r = static_cast<int>(k) / g;
    const int c = static_cast<int>(k) % g;
    for (int i = 0; i < tp; ++i) std::memcpy(out.px(r * tp + i, c * tp), tile.px(i, 0), tile.row_bytes());
  });
  return out;
}

/// Mask PNG: single 8-bit channel, road 255, background 0.
inline std::string encode_mask_png(const BinaryMask& m, int level = 6) {
  Image img(m.width, m.height, 1);
  for (std::size_t k = 0; k < m.pixels.size(); ++k) img.data[k] = m.pixels[k] ? 255 : 0;
  return encode_png(img, level);
}

inline BinaryMask decode_mask_png(std::string_view bytes) {
  const Image img = decode_png(bytes);
  BinaryMask m(img.width, img.height);
  for (std::size_t k = 0; k < m.pixels.size(); ++k) {
    m.pixels[k] = img.data[k * static_cast<std::size_t>(img.channels)] != 0;
  }
  return m;
}

// ---------------------------------------------------------------------------
// Manifest

struct ManifestRecord {
  std::string key;  // frame key z_x_y
  int z = 0;
  std::int64_t x = 0;
  std::int64_t y = 0;
  int grid = kDefaultGrid;
  int tile_px = kDefaultTilePx;
  GeoBounds bounds;
  double density = 0.0;
  std::int64_t road_pixels = 0;
  std::string image;  // relative to the manifest directory
  std::string mask;
  std::string digest;  // source digest of the OSM input the mask came from
  std::string image_sha256;
  std::string mask_sha256;
  std::string created_at;

  StitchFrame frame() const { return StitchFrame(TileCoord{z, x, y}, grid, tile_px); }
  std::int64_t frame_pixels() const noexcept { return static_cast<std::int64_t>(grid) * tile_px * grid * tile_px; }

  /// Equality of everything but the timestamp.
  bool same_content(const ManifestRecord& o) const {
    ManifestRecord a = *this;
    a.created_at = o.created_at;
    return a == o;
  }

  friend bool operator==(const ManifestRecord&, const ManifestRecord&) = default;
};

inline nlohmann::ordered_json to_json(const ManifestRecord& r) {
  return {{"schema", kManifestSchema},
          {"kind", "pair"},
          {"key", r.key},
          {"z", r.z},
          {"x", r.x},
          {"y", r.y},
          {"grid", r.grid},
          {"tile_px", r.tile_px},
          {"bounds", {{"north", r.bounds.north}, {"west", r.bounds.west},
                      {"south", r.bounds.south}, {"east", r.bounds.east}}},
          {"density", r.density},
          {"road_pixels", r.road_pixels},
          {"image", r.image},
          {"mask", r.mask},
          {"digest", r.digest},
          {"image_sha256", r.image_sha256},
          {"mask_sha256", r.mask_sha256},
          {"created_at", r.created_at}};
}

inline ManifestRecord record_from_json(const nlohmann::json& j) {
  try {
    ManifestRecord r;
    r.key = j.at("key").get<std::string>();
    r.z = j.at("z").get<int>();
    r.x = j.at("x").get<std::int64_t>();
    r.y = j.at("y").get<std::int64_t>();
    r.grid = j.at("grid").get<int>();
    r.tile_px = j.at("tile_px").get<int>();
    const auto& b = j.at("bounds");
    r.bounds = {b.at("north").get<double>(), b.at("west").get<double>(), b.at("south").get<double>(),
                b.at("east").get<double>()};
    r.density = j.at("density").get<double>();
    r.road_pixels = j.value("road_pixels", std::int64_t{0});
    r.image = j.value("image", "");
    r.mask = j.value("mask", "");
    r.digest = j.value("digest", "");
    r.image_sha256 = j.value("image_sha256", "");
    r.mask_sha256 = j.value("mask_sha256", "");
    r.created_at = j.value("created_at", "");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad manifest record: ") + e.what());
  }
}

/// Reproducibility header written at the top of every output manifest.
struct RunHeader {
  std::string version = ROADWEAVE_VERSION;
  std::string config_digest;
  std::uint64_t seed = 0;

  nlohmann::ordered_json to_json(std::string_view schema) const {
    return {{"schema", schema}, {"kind", "header"}, {"version", version},
            {"config_digest", config_digest}, {"seed", seed}};
  }
  friend bool operator==(const RunHeader&, const RunHeader&) = default;
};

inline std::string serialize_records(std::span<const ManifestRecord> records) {
  std::string out;
  for (const auto& r : records) out += to_json(r).dump() + "\n";
  return out;
}

/// Parses manifest text. Header lines are skipped; an unterminated final line
/// (an interrupted append) is ignored.
inline std::vector<ManifestRecord> parse_records(std::string_view text, RunHeader* last_header = nullptr) {
  std::vector<ManifestRecord> out;
  std::size_t pos = 0;
  int line_no = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) break;
    const std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      throw FormatError("manifest line " + std::to_string(line_no) + " is not valid JSON");
    }
    const std::string kind = j.value("kind", "pair");
    if (kind == "header") {
      if (last_header) {
        last_header->version = j.value("version", "");
        last_header->config_digest = j.value("config_digest", "");
        last_header->seed = j.value("seed", std::uint64_t{0});
      }
      continue;
    }
    out.push_back(record_from_json(j));
  }
  return out;
}

/// Append-only manifest.jsonl. Keys are unique; each append is one write(2)
/// of a complete line followed by fsync, so any prefix of the file parses.
class Manifest {
 public:
  Manifest(fs::path path, const RunHeader& header) : path_(std::move(path)) {
    std::error_code ec;
    RunHeader last;
    bool has_header = false;
    if (fs::exists(path_, ec)) {
      std::string text = read_file(path_);
      has_header = text.find("\"kind\":\"header\"") != std::string::npos;
      records_ = parse_records(text, &last);
      if (!text.empty() && text.back() != '\n') {
        // Drop the torn tail left by an interrupted append.
        text.erase(text.rfind('\n') == std::string::npos ? 0 : text.rfind('\n') + 1);
        write_file_atomic(path_, text);
      }
      for (std::size_t i = 0; i < records_.size(); ++i) {
        if (!index_.emplace(records_[i].key, i).second) {
          throw DuplicateKeyError("manifest " + path_.string() + " repeats key " + records_[i].key);
        }
      }
    }
    if (!has_header || !(last == header)) append_line(header.to_json(kManifestSchema).dump());
  }

  const fs::path& path() const noexcept { return path_; }
  fs::path directory() const { return path_.parent_path(); }

  std::vector<ManifestRecord> records() const {
    std::lock_guard lock(mutex_);
    return records_;
  }

  std::optional<ManifestRecord> find(const std::string& key) const {
    std::lock_guard lock(mutex_);
    auto it = index_.find(key);
    if (it == index_.end()) return std::nullopt;
    return records_[it->second];
  }

  void append(const ManifestRecord& r) {
    std::lock_guard lock(mutex_);
    if (index_.contains(r.key)) throw DuplicateKeyError("manifest already has frame " + r.key);
    append_line(to_json(r).dump());
    index_.emplace(r.key, records_.size());
    records_.push_back(r);
  }

  /// Replaces the record with the same key by rewriting the file atomically.
  void replace(const ManifestRecord& r) {
    std::lock_guard lock(mutex_);
    auto it = index_.find(r.key);
    if (it == index_.end()) throw DomainError("no manifest record " + r.key);
    records_[it->second] = r;
    std::string text = read_file(path_);
    std::string out;
    std::size_t pos = 0;
    while (pos < text.size()) {
      auto nl = text.find('\n', pos);
      if (nl == std::string::npos) nl = text.size();
      const std::string line = text.substr(pos, nl - pos);
      pos = nl + 1;
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      out += (j.value("kind", "pair") == "pair" && j.value("key", "") == r.key) ? to_json(r).dump() : line;
      out += "\n";
    }
    write_file_atomic(path_, out);
  }

 private:
  void append_line(const std::string& line) {
    if (path_.has_parent_path()) fs::create_directories(path_.parent_path());
    const std::string data = line + "\n";
    const int fd = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (fd < 0) throw IoError("cannot open manifest " + path_.string());
    const ssize_t n = ::write(fd, data.data(), data.size());
    const bool ok = n == static_cast<ssize_t>(data.size()) && ::fsync(fd) == 0;
    ::close(fd);
    if (!ok) throw IoError("manifest append failed for " + path_.string());
  }

  fs::path path_;
  mutable std::mutex mutex_;
  std::vector<ManifestRecord> records_;
  std::map<std::string, std::size_t> index_;
};

inline std::vector<ManifestRecord> read_manifest(const fs::path& path) { return parse_records(read_file(path)); }

// ---------------------------------------------------------------------------
// Pairs

struct StitchedPair {
  StitchFrame frame;
  fs::path image_path;
  fs::path mask_path;
  double density = 0.0;
  GeoBounds geo_bounds;
  std::string source_digest;
  std::int64_t road_pixels = 0;
};

struct PairOptions {
  bool force = false;
  std::string created_at;
  int png_level = 6;
  int jobs = 1;
};

/// Stitches imagery, renders the mask, writes both PNGs under `out_dir`
/// (images/ and masks/) and records the pair in `manifest`. Re-running with
/// identical inputs leaves every byte on disk unchanged.
inline StitchedPair build_pair(const StitchFrame& frame, std::span<const TileAsset> assets,
                               const FrameExtract& extract, const fs::path& out_dir, Manifest& manifest,
                               const PairOptions& opt = {}) {
  if (!(extract.frame == frame)) {
    throw DomainError("extract for " + extract.frame.key() + " does not belong to frame " + frame.key());
  }
  const Image image = stitch_image(assets, frame, opt.jobs);
  const MaskRaster mask = render_frame(extract, opt.jobs);
  const std::string image_png = encode_png(image, opt.png_level);
  const std::string mask_png = encode_mask_png(mask.mask, opt.png_level);

  ManifestRecord rec;
  rec.key = frame.key();
  rec.z = frame.origin().z;
  rec.x = frame.origin().x;
  rec.y = frame.origin().y;
  rec.grid = frame.grid();
  rec.tile_px = frame.tile_px();
  rec.bounds = frame.bounds();
  rec.density = measure_density(mask);
  rec.road_pixels = mask.road_pixel_count;
  rec.image = "images/" + frame.key() + ".png";
  rec.mask = "masks/" + frame.key() + ".png";
  rec.digest = extract.source_digest;
  rec.image_sha256 = sha256_hex(image_png);
  rec.mask_sha256 = sha256_hex(mask_png);
  rec.created_at = opt.created_at;

  const auto existing = manifest.find(rec.key);
  if (existing && !existing->same_content(rec) && !opt.force) {
    throw DuplicateKeyError("manifest already has a different record for frame " + rec.key);
  }

  const fs::path image_path = out_dir / rec.image;
  const fs::path mask_path = out_dir / rec.mask;
  const bool image_existed = fs::exists(image_path);
  write_artifact(image_path, image_png, opt.force);
  try {
    write_artifact(mask_path, mask_png, opt.force);
  } catch (...) {
    if (!image_existed) fs::remove(image_path);
    throw;
  }
  if (!existing) {
    manifest.append(rec);
  } else if (!existing->same_content(rec)) {
    manifest.replace(rec);
  }

  return {frame, image_path, mask_path, rec.density, rec.bounds, rec.digest, rec.road_pixels};
}

}  // namespace roadweave
