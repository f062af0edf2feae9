#pragma once

// Binary persistence for FrameExtract plus the sidecar text summary.
//
// Layout (all integers little-endian, doubles as IEEE-754 binary64):
//
//   magic    "RWEX"
//   u32      version (1)
//   i32 z, i64 x, i64 y, i32 grid, i32 tile_px     frame origin and shape
//   f64      margin_px
//   u16+str  source digest
//   u64      way count
//   per way: i64 id, u8 tier, u8 stroke_px, u16+str highway tag,
//            u32 point count, count x (f64 lat, f64 lon)

#include <roadweave/digest.hpp>
#include <roadweave/errors.hpp>
#include <roadweave/fs_util.hpp>
#include <roadweave/osm_ingest.hpp>

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <sstream>
#include <string>
#include <string_view>

namespace roadweave {

inline constexpr std::string_view kExtractMagic = "RWEX";
inline constexpr std::uint32_t kExtractVersion = 1;

namespace detail {

class ByteWriter {
 public:
  template <typename T>
  void put(T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
      std::array<char, sizeof(T)> raw;
      std::memcpy(raw.data(), &v, sizeof(T));
      std::reverse(raw.begin(), raw.end());
      out_.append(raw.data(), sizeof(T));
    } else {
      out_.append(reinterpret_cast<const char*>(&v), sizeof(T));
    }
  }
  void put_string(std::string_view s) {
    if (s.size() > 0xFFFF) throw FormatError("string too long for extract");
    put<std::uint16_t>(static_cast<std::uint16_t>(s.size()));
    out_.append(s);
  }
  void raw(std::string_view s) { out_.append(s); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view in) : in_(in) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    std::array<char, sizeof(T)> raw;
    std::memcpy(raw.data(), in_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
      std::reverse(raw.begin(), raw.end());
    }
    pos_ += sizeof(T);
    T v;
    std::memcpy(&v, raw.data(), sizeof(T));
    return v;
  }
  std::string get_string() {
    const auto n = get<std::uint16_t>();
    need(n);
    std::string s(in_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::string_view raw(std::size_t n) {
    need(n);
    auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const noexcept { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw FormatError("truncated extract at byte " + std::to_string(pos_));
  }
  std::string_view in_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode_extract(const FrameExtract& ex) {
  detail::ByteWriter w;
  w.raw(kExtractMagic);
  w.put<std::uint32_t>(kExtractVersion);
  w.put<std::int32_t>(ex.frame.origin().z);
  w.put<std::int64_t>(ex.frame.origin().x);
  w.put<std::int64_t>(ex.frame.origin().y);
  w.put<std::int32_t>(ex.frame.grid());
  w.put<std::int32_t>(ex.frame.tile_px());
  w.put<double>(ex.margin_px);
  w.put_string(ex.source_digest);
  w.put<std::uint64_t>(ex.ways.size());
  for (const auto& way : ex.ways) {
    w.put<std::int64_t>(way.id);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(way.road_class.tier));
    w.put<std::uint8_t>(static_cast<std::uint8_t>(way.road_class.stroke_px));
    w.put_string(way.highway_tag);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(way.polyline.size()));
    for (const auto& p : way.polyline) {
      w.put<double>(p.lat());
      w.put<double>(p.lon());
    }
  }
  return w.take();
}

inline FrameExtract decode_extract(std::string_view bytes) {
  detail::ByteReader r(bytes);
  if (r.raw(4) != kExtractMagic) throw FormatError("not a frame extract (bad magic)");
  if (const auto v = r.get<std::uint32_t>(); v != kExtractVersion) {
    throw FormatError("unsupported extract version " + std::to_string(v));
  }
  FrameExtract ex;
  const int z = r.get<std::int32_t>();
  const auto x = r.get<std::int64_t>();
  const auto y = r.get<std::int64_t>();
  const int grid = r.get<std::int32_t>();
  const int tile_px = r.get<std::int32_t>();
  ex.frame = StitchFrame(TileCoord{z, x, y}, grid, tile_px);
  ex.margin_px = r.get<double>();
  ex.source_digest = r.get_string();
  const auto count = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    RoadWay way;
    way.id = r.get<std::int64_t>();
    const auto tier = r.get<std::uint8_t>();
    if (tier > 2) throw FormatError("bad road tier in extract");
    way.road_class.tier = static_cast<RoadTier>(tier);
    way.road_class.stroke_px = r.get<std::uint8_t>();
    way.highway_tag = r.get_string();
    const auto n = r.get<std::uint32_t>();
    way.polyline.reserve(n);
    for (std::uint32_t k = 0; k < n; ++k) {
      const double lat = r.get<double>();
      const double lon = r.get<double>();
      way.polyline.emplace_back(lat, lon);
    }
    ex.ways.push_back(std::move(way));
  }
  if (!r.done()) throw FormatError("trailing bytes after extract");
  return ex;
}

inline FrameExtract read_extract(const fs::path& path) { return decode_extract(read_file(path)); }

/// Human-readable sidecar: way count, class histogram, digests.
inline std::string extract_summary(const FrameExtract& ex, std::string_view encoded) {
  std::int64_t counts[3] = {0, 0, 0};
  for (const auto& w : ex.ways) ++counts[static_cast<int>(w.road_class.tier)];
  std::ostringstream s;
  s << "frame=" << ex.frame.key() << "\n"
    << "grid=" << ex.frame.grid() << "\n"
    << "tile_px=" << ex.frame.tile_px() << "\n"
    << "margin_px=" << ex.margin_px << "\n"
    << "ways=" << ex.ways.size() << "\n"
    << "main=" << counts[0] << "\n"
    << "middle=" << counts[1] << "\n"
    << "small=" << counts[2] << "\n"
    << "digest=" << sha256_hex(encoded) << "\n"
    << "source_digest=" << ex.source_digest << "\n";
  return s.str();
}

/// Writes {dir}/{key}.bin and {dir}/{key}.txt. Returns the binary's digest.
inline std::string write_extract(const fs::path& dir, const FrameExtract& ex, bool force) {
  const std::string bytes = encode_extract(ex);
  write_artifact(dir / (ex.frame.key() + ".bin"), bytes, force);
  write_artifact(dir / (ex.frame.key() + ".txt"), extract_summary(ex, bytes), force);
  return sha256_hex(bytes);
}

}  // namespace roadweave
