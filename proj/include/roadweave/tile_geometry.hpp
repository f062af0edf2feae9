#pragma once

// Web-Mercator / XYZ slippy-tile geometry.
//
// Tiles use the XYZ scheme: origin at the north-west corner of the world,
// y growing southward. Every conversion is a pure function of its inputs
// evaluated in IEEE double precision. A point lying exactly on a shared tile
// edge belongs to the tile east / south of that edge (floor semantics).

#include <roadweave/errors.hpp>

#include <cmath>
#include <compare>
#include <cstdint>
#include <numbers>
#include <string>
#include <string_view>
#include <charconv>
#include <tuple>

namespace roadweave {

/// Latitude bound of the square Web-Mercator world: atan(sinh(pi)) in degrees.
inline constexpr double kMaxLatitude = 85.051128779806592;
inline constexpr int kDefaultZoom = 18;
inline constexpr int kDefaultGrid = 16;
inline constexpr int kDefaultTilePx = 256;
inline constexpr int kMaxZoom = 30;

/// WGS84 position in degrees. Latitude is restricted to the Mercator bound;
/// longitude is normalized into [-180, 180) so +180 becomes -180.
class GeoPoint {
 public:
  constexpr GeoPoint() = default;

  GeoPoint(double lat, double lon) : lat_(lat), lon_(normalize_lon(lon)) {
    if (!(std::abs(lat) <= kMaxLatitude)) {
      throw DomainError("latitude " + std::to_string(lat) +
                        " outside Web-Mercator bound");
    }
  }

  constexpr double lat() const noexcept { return lat_; }
  constexpr double lon() const noexcept { return lon_; }

  friend constexpr bool operator==(const GeoPoint&, const GeoPoint&) = default;

  static double normalize_lon(double lon) {
    if (!std::isfinite(lon)) throw DomainError("non-finite longitude");
    if (lon >= -180.0 && lon < 180.0) return lon;
    double wrapped = std::fmod(lon + 180.0, 360.0);
    if (wrapped < 0.0) wrapped += 360.0;
    wrapped -= 180.0;
    return wrapped >= 180.0 ? -180.0 : wrapped;
  }

 private:
  double lat_ = 0.0;
  double lon_ = 0.0;
};

struct TileCoord {
  int z = kDefaultZoom;
  std::int64_t x = 0;
  std::int64_t y = 0;

  static constexpr std::int64_t tiles_per_side(int zoom) noexcept {
    return std::int64_t{1} << zoom;
  }

  bool valid() const noexcept {
    return z >= 0 && z <= kMaxZoom && x >= 0 && y >= 0 &&
           x < tiles_per_side(z) && y < tiles_per_side(z);
  }

  /// "z/x/y", the key used in URLs and the tile cache.
  std::string path_key() const {
    return std::to_string(z) + "/" + std::to_string(x) + "/" + std::to_string(y);
  }

  friend constexpr auto operator<=>(const TileCoord&, const TileCoord&) = default;
};

inline TileCoord checked_tile(int z, std::int64_t x, std::int64_t y) {
  TileCoord t{z, x, y};
  if (!t.valid()) throw DomainError("invalid tile " + t.path_key());
  return t;
}

/// Normalized Mercator position: both axes in [0, 1], origin north-west.
struct MercatorPoint {
  double x = 0.0;
  double y = 0.0;
};

inline MercatorPoint geo_to_mercator(const GeoPoint& p) noexcept {
  constexpr double pi = std::numbers::pi;
  const double phi = p.lat() * pi / 180.0;
  return {(p.lon() + 180.0) / 360.0,
          (1.0 - std::log(std::tan(phi) + 1.0 / std::cos(phi)) / pi) / 2.0};
}

/// Inverse projection. `m.x` may leave [0,1) slightly (frame margins);
/// the longitude is then normalized.
inline GeoPoint mercator_to_geo(const MercatorPoint& m) {
  constexpr double pi = std::numbers::pi;
  double lat = std::atan(std::sinh(pi * (1.0 - 2.0 * m.y))) * 180.0 / pi;
  if (lat > kMaxLatitude) lat = kMaxLatitude;
  if (lat < -kMaxLatitude) lat = -kMaxLatitude;
  return GeoPoint(lat, m.x * 360.0 - 180.0);
}

/// Tile containing `p` at zoom `z`. Results are clamped into the valid range
/// so the Mercator corners (lat = +/-kMaxLatitude) land on the edge tiles.
inline TileCoord geo_to_tile(const GeoPoint& p, int z = kDefaultZoom) {
  if (z < 0 || z > kMaxZoom) throw DomainError("zoom out of range");
  const MercatorPoint m = geo_to_mercator(p);
  const double n = static_cast<double>(TileCoord::tiles_per_side(z));
  const auto last = TileCoord::tiles_per_side(z) - 1;
  auto clamp = [last](double v) {
    auto i = static_cast<std::int64_t>(std::floor(v));
    return i < 0 ? std::int64_t{0} : (i > last ? last : i);
  };
  return {z, clamp(m.x * n), clamp(m.y * n)};
}

/// Geographic extent of a tile. A tile owns lon in [west, east) and
/// lat in (south, north].
struct GeoBounds {
  double north = 0.0;
  double west = 0.0;
  double south = 0.0;
  double east = 0.0;

  GeoPoint nw() const { return GeoPoint(north, west); }
  GeoPoint se() const { return GeoPoint(south, east >= 180.0 ? east - 360.0 : east); }

  bool contains(const GeoPoint& p) const noexcept {
    return p.lat() <= north && p.lat() > south && p.lon() >= west && p.lon() < east;
  }

  friend constexpr bool operator==(const GeoBounds&, const GeoBounds&) = default;
};

inline double tile_edge_lat(std::int64_t y, int z) noexcept {
  constexpr double pi = std::numbers::pi;
  const double n = static_cast<double>(TileCoord::tiles_per_side(z));
  return std::atan(std::sinh(pi * (1.0 - 2.0 * static_cast<double>(y) / n))) * 180.0 / pi;
}

inline double tile_edge_lon(std::int64_t x, int z) noexcept {
  const double n = static_cast<double>(TileCoord::tiles_per_side(z));
  return static_cast<double>(x) / n * 360.0 - 180.0;
}

/// North-west / south-east corners of `t`. The east edge is reported as
/// +180 for the last column (the SE GeoPoint wraps it to -180).
inline GeoBounds tile_to_bounds(const TileCoord& t) {
  if (!t.valid()) throw DomainError("invalid tile " + t.path_key());
  return {tile_edge_lat(t.y, t.z), tile_edge_lon(t.x, t.z),
          tile_edge_lat(t.y + 1, t.z), tile_edge_lon(t.x + 1, t.z)};
}

/// Meters per pixel for 256-px tiles.
inline double ground_resolution(double lat_deg, int z = kDefaultZoom) {
  if (!(std::abs(lat_deg) <= kMaxLatitude)) throw DomainError("latitude out of range");
  constexpr double pi = std::numbers::pi;
  return 156543.03392 * std::cos(lat_deg * pi / 180.0) /
         static_cast<double>(TileCoord::tiles_per_side(z));
}

/// A grid x grid block of tiles stitched into one raster. Frames are
/// grid-aligned: the origin tile's x and y are multiples of `grid`.
class StitchFrame {
 public:
  StitchFrame() = default;

  StitchFrame(TileCoord origin, int grid = kDefaultGrid, int tile_px = kDefaultTilePx)
      : origin_(origin), grid_(grid), tile_px_(tile_px) {
    if (grid <= 0 || tile_px <= 0) throw DomainError("frame grid and tile size must be positive");
    if (!origin.valid()) throw DomainError("invalid frame origin " + origin.path_key());
    if (origin.x % grid != 0 || origin.y % grid != 0) {
      throw DomainError("frame origin " + origin.path_key() + " is not aligned to grid " +
                        std::to_string(grid));
    }
    if (origin.x + grid > TileCoord::tiles_per_side(origin.z) ||
        origin.y + grid > TileCoord::tiles_per_side(origin.z)) {
      throw DomainError("frame exceeds the tile range of its zoom level");
    }
  }

  /// The frame that contains tile `t`.
  static StitchFrame containing(const TileCoord& t, int grid = kDefaultGrid,
                                int tile_px = kDefaultTilePx) {
    if (!t.valid()) throw DomainError("invalid tile " + t.path_key());
    return StitchFrame({t.z, t.x - t.x % grid, t.y - t.y % grid}, grid, tile_px);
  }

  const TileCoord& origin() const noexcept { return origin_; }
  int grid() const noexcept { return grid_; }
  int tile_px() const noexcept { return tile_px_; }
  int size_px() const noexcept { return grid_ * tile_px_; }
  std::int64_t pixel_count() const noexcept {
    return static_cast<std::int64_t>(size_px()) * size_px();
  }

  /// Member tile at grid row `r`, column `c`.
  TileCoord tile(int r, int c) const noexcept {
    return {origin_.z, origin_.x + c, origin_.y + r};
  }

  /// "z_x_y" of the origin tile; names mask and image files.
  std::string key() const {
    return std::to_string(origin_.z) + "_" + std::to_string(origin_.x) + "_" +
           std::to_string(origin_.y);
  }

  GeoBounds bounds() const {
    return {tile_edge_lat(origin_.y, origin_.z), tile_edge_lon(origin_.x, origin_.z),
            tile_edge_lat(origin_.y + grid_, origin_.z),
            tile_edge_lon(origin_.x + grid_, origin_.z)};
  }

  /// World pixel scale: pixels spanning the whole Mercator square.
  double world_px() const noexcept {
    return static_cast<double>(TileCoord::tiles_per_side(origin_.z)) * tile_px_;
  }

  friend bool operator==(const StitchFrame&, const StitchFrame&) = default;
  friend auto operator<=>(const StitchFrame& a, const StitchFrame& b) {
    return std::tie(a.origin_.z, a.origin_.y, a.origin_.x, a.grid_, a.tile_px_) <=>
           std::tie(b.origin_.z, b.origin_.y, b.origin_.x, b.grid_, b.tile_px_);
  }

 private:
  TileCoord origin_{};
  int grid_ = kDefaultGrid;
  int tile_px_ = kDefaultTilePx;
};

/// Continuous frame pixel position. Pixel (row i, column j) covers
/// [j, j+1) x [i, i+1); its center is (j + 0.5, i + 0.5).
struct PixelCoord {
  double px = 0.0;
  double py = 0.0;
};

/// Projects into frame pixel space without range checks.
inline PixelCoord project_to_frame(const GeoPoint& p, const StitchFrame& f) noexcept {
  const MercatorPoint m = geo_to_mercator(p);
  const double scale = f.world_px();
  return {m.x * scale - static_cast<double>(f.origin().x) * f.tile_px(),
          m.y * scale - static_cast<double>(f.origin().y) * f.tile_px()};
}

inline GeoPoint frame_to_geo(const PixelCoord& c, const StitchFrame& f) {
  const double scale = f.world_px();
  return mercator_to_geo({(c.px + static_cast<double>(f.origin().x) * f.tile_px()) / scale,
                          (c.py + static_cast<double>(f.origin().y) * f.tile_px()) / scale});
}

/// Frame pixel coordinates of `p`; throws OutOfFrameError when `p` falls
/// outside the frame expanded by `margin_px` on every side.
inline PixelCoord geo_to_pixel(const GeoPoint& p, const StitchFrame& f, double margin_px = 0.0) {
  const PixelCoord c = project_to_frame(p, f);
  const double lo = -margin_px;
  const double hi = f.size_px() + margin_px;
  if (!(c.px >= lo && c.px <= hi && c.py >= lo && c.py <= hi)) {
    throw OutOfFrameError("point (" + std::to_string(p.lat()) + ", " + std::to_string(p.lon()) +
                          ") outside frame " + f.key());
  }
  return c;
}

/// Parses "z/x/y" (also accepts "z_x_y").
inline TileCoord parse_tile_key(std::string_view s) {
  std::int64_t v[3] = {0, 0, 0};
  const char* p = s.data();
  const char* end = s.data() + s.size();
  for (int i = 0; i < 3; ++i) {
    auto [next, ec] = std::from_chars(p, end, v[i]);
    if (ec != std::errc{}) throw FormatError("bad tile key '" + std::string(s) + "'");
    p = next;
    if (i < 2) {
      if (p == end || (*p != '/' && *p != '_')) throw FormatError("bad tile key '" + std::string(s) + "'");
      ++p;
    }
  }
  if (p != end) throw FormatError("bad tile key '" + std::string(s) + "'");
  return checked_tile(static_cast<int>(v[0]), v[1], v[2]);
}

}  // namespace roadweave
