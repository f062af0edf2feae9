#pragma once

// Independent reference computations used by the tests. Nothing here calls
// into the fast paths it checks.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <utility>
#include <vector>

namespace oracle {

struct P {
  double x, y;
};

struct Seg {
  P a, b;
  double width;
};

/// Squared distance from point c to segment ab by clamped projection.
inline double dist2_point_segment(P c, P a, P b) {
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = 0.0;
  if (len2 > 0.0) {
    t = ((c.x - a.x) * dx + (c.y - a.y) * dy) / len2;
    t = t < 0.0 ? 0.0 : (t > 1.0 ? 1.0 : t);
  }
  const double ex = a.x + t * dx - c.x;
  const double ey = a.y + t * dy - c.y;
  return ex * ex + ey * ey;
}

/// Every pixel center against every segment.
inline std::vector<std::uint8_t> brute_force_mask(const std::vector<Seg>& segs, int w, int h) {
  std::vector<std::uint8_t> out(static_cast<std::size_t>(w) * h, 0);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      const P c{j + 0.5, i + 0.5};
      for (const auto& s : segs) {
        const double r = s.width / 2.0;
        if (dist2_point_segment(c, s.a, s.b) <= r * r) {
          out[static_cast<std::size_t>(i) * w + j] = 1;
          break;
        }
      }
    }
  }
  return out;
}

/// Direct spherical Mercator: world pixel coordinates at zoom z.
inline P mercator_world_px(double lat_deg, double lon_deg, int z, int tile_px) {
  const double pi = std::numbers::pi;
  const double scale = std::ldexp(static_cast<double>(tile_px), z);
  const double x = (lon_deg + 180.0) / 360.0 * scale;
  const double lat = lat_deg * pi / 180.0;
  const double y = (0.5 - std::log(std::tan(pi / 4.0 + lat / 2.0)) / (2.0 * pi)) * scale;
  return {x, y};
}

inline double orient(P a, P b, P c) { return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x); }

inline bool on_segment(P a, P b, P c) {
  return std::min(a.x, b.x) <= c.x && c.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= c.y &&
         c.y <= std::max(a.y, b.y);
}

inline bool segments_intersect(P a, P b, P c, P d) {
  const double d1 = orient(c, d, a), d2 = orient(c, d, b), d3 = orient(a, b, c), d4 = orient(a, b, d);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0))) return true;
  if (d1 == 0 && on_segment(c, d, a)) return true;
  if (d2 == 0 && on_segment(c, d, b)) return true;
  if (d3 == 0 && on_segment(a, b, c)) return true;
  if (d4 == 0 && on_segment(a, b, d)) return true;
  return false;
}

/// Segment vs closed axis-aligned rectangle: an endpoint inside, or a
/// crossing with one of the four edges.
inline bool segment_hits_rect(P a, P b, double x0, double y0, double x1, double y1) {
  auto inside = [&](P p) { return p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1; };
  if (inside(a) || inside(b)) return true;
  const P c[4] = {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}};
  for (int k = 0; k < 4; ++k) {
    if (segments_intersect(a, b, c[k], c[(k + 1) % 4])) return true;
  }
  return false;
}

/// Kahan-Babuska (Neumaier) compensated sum.
template <typename It, typename F>
double neumaier_sum(It begin, It end, F value) {
  double sum = 0.0, comp = 0.0;
  for (auto it = begin; it != end; ++it) {
    const double v = value(*it);
    const double t = sum + v;
    if (std::abs(sum) >= std::abs(v)) {
      comp += (sum - t) + v;
    } else {
      comp += (v - t) + sum;
    }
    sum = t;
  }
  return sum + comp;
}

}  // namespace oracle
