#pragma once

// Binary road-mask rasterization.
//
// A pixel is road iff its center lies within stroke/2 (inclusive) of some
// segment of some way: the union of capsules, i.e. round caps and joins, with
// no anti-aliasing. The fast path scans each capsule row by row over an
// analytic x-span widened by one pixel, then applies the exact predicate, so
// its output is identical to testing every pixel against every segment.

#include <roadweave/errors.hpp>
#include <roadweave/osm_ingest.hpp>
#include <roadweave/parallel.hpp>
#include <roadweave/tile_geometry.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

namespace roadweave {

/// Row-major 0/1 raster.
struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  BinaryMask() = default;
  BinaryMask(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, 0) {
    if (w < 0 || h < 0) throw DomainError("negative mask size");
  }

  std::uint8_t at(int row, int col) const { return pixels[static_cast<std::size_t>(row) * width + col]; }
  std::uint8_t& at(int row, int col) { return pixels[static_cast<std::size_t>(row) * width + col]; }

  std::int64_t count() const noexcept {
    return std::accumulate(pixels.begin(), pixels.end(), std::int64_t{0},
                           [](std::int64_t acc, std::uint8_t v) { return acc + (v != 0); });
  }

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

/// One segment of a polyline in pixel space with its stroke width.
struct StrokeSegment {
  Vec2 a;
  Vec2 b;
  double width_px = 1.0;
};

/// A polyline in frame pixel space.
struct Stroke {
  std::vector<Vec2> points;
  double width_px = 1.0;
};

/// Exact coverage predicate shared by every rasterization path: squared
/// distance from (px, py) to segment ab compared against r^2.
inline bool capsule_covers(double px, double py, const Vec2& a, const Vec2& b, double r2) noexcept {
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = 0.0;
  if (len2 > 0.0) {
    t = ((px - a.x) * dx + (py - a.y) * dy) / len2;
    t = t < 0.0 ? 0.0 : (t > 1.0 ? 1.0 : t);
  }
  const double ex = a.x + t * dx - px;
  const double ey = a.y + t * dy - py;
  return ex * ex + ey * ey <= r2;
}

inline std::vector<StrokeSegment> segments_of(std::span<const Stroke> strokes) {
  std::vector<StrokeSegment> segs;
  for (const auto& s : strokes) {
    if (s.points.size() == 1) segs.push_back({s.points[0], s.points[0], s.width_px});
    for (std::size_t i = 0; i + 1 < s.points.size(); ++i) {
      segs.push_back({s.points[i], s.points[i + 1], s.width_px});
    }
  }
  return segs;
}

namespace detail {

/// Approximate [lo, hi] x-extent of the capsule on the horizontal line y.
/// Returns false when the line misses it. Callers widen the span before
/// applying the exact predicate, so small rounding here is harmless.
inline bool capsule_row_span(const StrokeSegment& s, double y, double& lo, double& hi) noexcept {
  const double r = s.width_px * 0.5;
  lo = INFINITY;
  hi = -INFINITY;
  auto disk = [&](const Vec2& c) {
    const double dy = y - c.y;
    const double h2 = r * r - dy * dy;
    if (h2 < 0.0) return;
    const double h = std::sqrt(h2);
    lo = std::min(lo, c.x - h);
    hi = std::max(hi, c.x + h);
  };
  disk(s.a);
  disk(s.b);
  const double dx = s.b.x - s.a.x;
  const double dy = s.b.y - s.a.y;
  const double len = std::sqrt(dx * dx + dy * dy);
  if (len > 0.0) {
    // Band rectangle: corners are the endpoints offset by +/- r along the normal.
    const double nx = -dy / len * r;
    const double ny = dx / len * r;
    const Vec2 quad[4] = {{s.a.x + nx, s.a.y + ny},
                          {s.b.x + nx, s.b.y + ny},
                          {s.b.x - nx, s.b.y - ny},
                          {s.a.x - nx, s.a.y - ny}};
    for (int k = 0; k < 4; ++k) {
      const Vec2& p = quad[k];
      const Vec2& q = quad[(k + 1) % 4];
      const double ylo = std::min(p.y, q.y);
      const double yhi = std::max(p.y, q.y);
      if (y < ylo || y > yhi) continue;
      if (p.y == q.y) {
        lo = std::min({lo, p.x, q.x});
        hi = std::max({hi, p.x, q.x});
      } else {
        const double x = p.x + (y - p.y) / (q.y - p.y) * (q.x - p.x);
        lo = std::min(lo, x);
        hi = std::max(hi, x);
      }
    }
  }
  return lo <= hi;
}

/// Rasterizes `seg` into rows [row_begin, row_end) of `mask`.
inline void draw_segment_rows(const StrokeSegment& seg, BinaryMask& mask, int row_begin, int row_end) {
  const double r = seg.width_px * 0.5;
  const double r2 = r * r;
  // Pixel row i is touched when its center i + 0.5 lies in [ymin - r, ymax + r].
  const double ymin = std::min(seg.a.y, seg.b.y) - r;
  const double ymax = std::max(seg.a.y, seg.b.y) + r;
  const int i0 = static_cast<int>(std::max<double>(row_begin, std::floor(ymin - 0.5) - 1.0));
  const int i1 = static_cast<int>(std::min<double>(row_end - 1, std::ceil(ymax - 0.5) + 1.0));
  for (int i = i0; i <= i1; ++i) {
    const double cy = i + 0.5;
    double lo, hi;
    if (!capsule_row_span(seg, cy, lo, hi)) {
      // The span test can miss a sliver at the extreme rows; probe with a
      // slightly thicker line before giving up.
      StrokeSegment fat = seg;
      fat.width_px += 2.0;
      if (!capsule_row_span(fat, cy, lo, hi)) continue;
    }
    const int j0 = static_cast<int>(std::max(0.0, std::floor(lo - 1.5)));
    const int j1 = static_cast<int>(std::min<double>(mask.width - 1, std::ceil(hi + 0.5)));
    std::uint8_t* row = mask.pixels.data() + static_cast<std::size_t>(i) * mask.width;
    for (int j = j0; j <= j1; ++j) {
      if (row[j] == 0 && capsule_covers(j + 0.5, cy, seg.a, seg.b, r2)) row[j] = 1;
    }
  }
}

inline constexpr int kBandRows = 64;

}  // namespace detail

/// Rasterizes `segments` into a width x height mask. With jobs > 1 the rows
/// are split into bands rendered concurrently; output is independent of `jobs`.
inline BinaryMask rasterize_segments(std::span<const StrokeSegment> segments, int width, int height,
                                     int jobs = 1) {
  BinaryMask mask(width, height);
  if (width == 0 || height == 0 || segments.empty()) return mask;
  const int bands = (height + detail::kBandRows - 1) / detail::kBandRows;
  // Active-segment index: the segments whose row range touches each band.
  std::vector<std::vector<std::uint32_t>> active(static_cast<std::size_t>(bands));
  for (std::size_t k = 0; k < segments.size(); ++k) {
    const auto& s = segments[k];
    if (!(s.width_px > 0.0)) continue;
    const double r = s.width_px * 0.5;
    const double ymin = std::min(s.a.y, s.b.y) - r - 2.0;
    const double ymax = std::max(s.a.y, s.b.y) + r + 2.0;
    const double xmin = std::min(s.a.x, s.b.x) - r - 2.0;
    const double xmax = std::max(s.a.x, s.b.x) + r + 2.0;
    if (ymax < 0.0 || ymin > height || xmax < 0.0 || xmin > width) continue;
    const int b0 = static_cast<int>(std::max(0.0, std::floor(ymin / detail::kBandRows)));
    const int b1 = static_cast<int>(std::min<double>(bands - 1, std::floor(ymax / detail::kBandRows)));
    for (int b = b0; b <= b1; ++b) active[static_cast<std::size_t>(b)].push_back(static_cast<std::uint32_t>(k));
  }
  parallel_for(static_cast<std::size_t>(bands), jobs, [&](std::size_t b) {
    const int row_begin = static_cast<int>(b) * detail::kBandRows;
    const int row_end = std::min(height, row_begin + detail::kBandRows);
    for (std::uint32_t k : active[b]) detail::draw_segment_rows(segments[k], mask, row_begin, row_end);
  });
  return mask;
}

inline BinaryMask rasterize(std::span<const Stroke> strokes, int width, int height, int jobs = 1) {
  const auto segs = segments_of(strokes);
  return rasterize_segments(segs, width, height, jobs);
}

/// A rendered frame label. Road pixels are 1, background 0.
struct MaskRaster {
  StitchFrame frame;
  BinaryMask mask;
  std::int64_t road_pixel_count = 0;
};

/// Projects an extract's ways into frame pixel space, one stroke per way piece.
inline std::vector<Stroke> frame_strokes(const FrameExtract& extract) {
  std::vector<Stroke> strokes;
  strokes.reserve(extract.ways.size());
  for (const auto& way : extract.ways) {
    Stroke s;
    s.width_px = way.road_class.stroke_px;
    s.points.reserve(way.polyline.size());
    for (const auto& g : way.polyline) {
      const PixelCoord c = project_to_frame(g, extract.frame);
      s.points.push_back({c.px, c.py});
    }
    strokes.push_back(std::move(s));
  }
  return strokes;
}

inline MaskRaster render_frame(const FrameExtract& extract, int jobs = 1) {
  MaskRaster out;
  out.frame = extract.frame;
  const auto strokes = frame_strokes(extract);
  out.mask = rasterize(strokes, extract.frame.size_px(), extract.frame.size_px(), jobs);
  out.road_pixel_count = out.mask.count();
  return out;
}

/// Renders many frames, one frame per worker.
inline std::vector<MaskRaster> render_frames(std::span<const FrameExtract> extracts, int jobs = 1) {
  std::vector<MaskRaster> out(extracts.size());
  parallel_for(extracts.size(), jobs, [&](std::size_t i) { out[i] = render_frame(extracts[i], 1); });
  return out;
}

/// Road pixels over total pixels.
inline double measure_density(const MaskRaster& m) {
  const auto total = static_cast<std::int64_t>(m.mask.width) * m.mask.height;
  if (total == 0) return 0.0;
  return static_cast<double>(m.road_pixel_count) / static_cast<double>(total);
}

}  // namespace roadweave
