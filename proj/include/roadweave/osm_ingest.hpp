#pragma once

// Streaming OSM XML ingestion: node table + highway-tagged ways, paved-road
// classification into three stroke tiers, and partitioning of the road set
// into per-frame extracts clipped to margin-expanded frame rectangles.

#include <roadweave/digest.hpp>
#include <roadweave/errors.hpp>
#include <roadweave/parallel.hpp>
#include <roadweave/tile_geometry.hpp>

#include <expat.h>
#include <zlib.h>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

namespace roadweave {

// ---------------------------------------------------------------------------
// Road classes

enum class RoadTier : std::uint8_t { kMain = 0, kMiddle = 1, kSmall = 2 };

inline std::string_view tier_name(RoadTier t) noexcept {
  switch (t) {
    case RoadTier::kMain: return "main";
    case RoadTier::kMiddle: return "middle";
    case RoadTier::kSmall: return "small";
  }
  return "?";
}

/// Stroke width in pixels per tier.
struct StrokeTable {
  int main = 15;
  int middle = 10;
  int small = 5;

  int width(RoadTier t) const noexcept {
    switch (t) {
      case RoadTier::kMain: return main;
      case RoadTier::kMiddle: return middle;
      case RoadTier::kSmall: return small;
    }
    return 0;
  }
  int max_width() const noexcept { return std::max({main, middle, small}); }
  friend bool operator==(const StrokeTable&, const StrokeTable&) = default;
};

struct RoadClass {
  RoadTier tier = RoadTier::kSmall;
  int stroke_px = 5;
  friend bool operator==(const RoadClass&, const RoadClass&) = default;
};

using TagMap = std::map<std::string, std::string, std::less<>>;

/// Maps highway=* values onto tiers. Only the highway tag is consulted.
/// Link roads share their parent's tier.
class RoadClassifier {
 public:
  static std::set<std::string, std::less<>> default_main() {
    return {"motorway", "motorway_link", "trunk", "trunk_link"};
  }
  static std::set<std::string, std::less<>> default_middle() {
    return {"primary",  "primary_link",  "secondary",
            "secondary_link", "tertiary", "tertiary_link"};
  }
  /// Paved remainder rendered as small roads. Anything else (track, path,
  /// footway, cycleway, bridleway, steps, pedestrian, construction, ...) is rejected.
  static std::set<std::string, std::less<>> default_small() {
    return {"unclassified", "residential", "service", "living_street", "road"};
  }

  RoadClassifier() : RoadClassifier(StrokeTable{}) {}

  explicit RoadClassifier(StrokeTable strokes,
                          std::set<std::string, std::less<>> small = default_small())
      : strokes_(strokes), main_(default_main()), middle_(default_middle()), small_(std::move(small)) {
    if (strokes.main <= 0 || strokes.middle <= 0 || strokes.small <= 0) {
      throw DomainError("stroke widths must be positive");
    }
    for (const auto& v : small_) {
      if (main_.contains(v) || middle_.contains(v)) {
        throw DomainError("small-road set overlaps main/middle tier: " + v);
      }
    }
  }

  std::optional<RoadClass> classify_value(std::string_view highway) const {
    if (main_.contains(highway)) return RoadClass{RoadTier::kMain, strokes_.main};
    if (middle_.contains(highway)) return RoadClass{RoadTier::kMiddle, strokes_.middle};
    if (small_.contains(highway)) return RoadClass{RoadTier::kSmall, strokes_.small};
    return std::nullopt;
  }

  std::optional<RoadClass> classify(const TagMap& tags) const {
    auto it = tags.find("highway");
    if (it == tags.end()) return std::nullopt;
    return classify_value(it->second);
  }

  const StrokeTable& strokes() const noexcept { return strokes_; }
  const std::set<std::string, std::less<>>& small_set() const noexcept { return small_; }

 private:
  StrokeTable strokes_;
  std::set<std::string, std::less<>> main_;
  std::set<std::string, std::less<>> middle_;
  std::set<std::string, std::less<>> small_;
};

// ---------------------------------------------------------------------------
// Parsing

struct OsmNode {
  std::int64_t id = 0;
  GeoPoint location;
};

struct RawWay {
  std::int64_t id = 0;
  std::vector<std::int64_t> refs;
  TagMap tags;
};

struct ParseStats {
  std::int64_t nodes = 0;
  std::int64_t nodes_out_of_range = 0;  // beyond the Mercator latitude bound
  std::int64_t ways_seen = 0;
  std::int64_t ways_retained = 0;  // carrying a highway tag
  std::int64_t relations_skipped = 0;
  std::int64_t forward_refs = 0;   // resolved after the pass
  std::int64_t dangling_refs = 0;  // warnings: referenced node never seen
  std::int64_t bytes = 0;
};

struct OsmData {
  std::unordered_map<std::int64_t, GeoPoint> nodes;
  std::vector<RawWay> ways;
  ParseStats stats;
  std::string source_digest;  // sha256 of the decompressed XML
};

namespace detail {

class OsmXmlHandler {
 public:
  explicit OsmXmlHandler(OsmData& out) : out_(out) {}

  static void XMLCALL on_start(void* self, const XML_Char* name, const XML_Char** attrs) {
    static_cast<OsmXmlHandler*>(self)->start(name, attrs);
  }
  static void XMLCALL on_end(void* self, const XML_Char* name) {
    static_cast<OsmXmlHandler*>(self)->end(name);
  }

  std::int64_t pending_refs() const noexcept { return pending_; }

 private:
  static const char* attr(const XML_Char** attrs, const char* key) {
    for (int i = 0; attrs[i] != nullptr; i += 2) {
      if (std::strcmp(attrs[i], key) == 0) return attrs[i + 1];
    }
    return nullptr;
  }

  template <typename T>
  static bool number(const char* s, T& v) {
    if (s == nullptr) return false;
    const char* end = s + std::strlen(s);
    auto [p, ec] = std::from_chars(s, end, v);
    return ec == std::errc{} && p == end;
  }

  void start(const char* name, const XML_Char** attrs) {
    ++depth_;
    if (relation_depth_ > 0) return;
    if (std::strcmp(name, "node") == 0 && way_depth_ == 0) {
      std::int64_t id = 0;
      double lat = 0.0, lon = 0.0;
      if (!number(attr(attrs, "id"), id) || !number(attr(attrs, "lat"), lat) ||
          !number(attr(attrs, "lon"), lon)) {
        return;  // deleted/placeholder nodes carry no position
      }
      ++out_.stats.nodes;
      if (!(std::abs(lat) <= kMaxLatitude) || !std::isfinite(lon)) {
        ++out_.stats.nodes_out_of_range;
        return;
      }
      out_.nodes.insert_or_assign(id, GeoPoint(lat, lon));
    } else if (std::strcmp(name, "way") == 0) {
      way_depth_ = depth_;
      current_ = RawWay{};
      number(attr(attrs, "id"), current_.id);
      ++out_.stats.ways_seen;
    } else if (std::strcmp(name, "relation") == 0) {
      relation_depth_ = depth_;
      ++out_.stats.relations_skipped;
    } else if (way_depth_ > 0 && std::strcmp(name, "nd") == 0) {
      std::int64_t ref = 0;
      if (number(attr(attrs, "ref"), ref)) {
        if (!out_.nodes.contains(ref)) ++pending_;
        current_.refs.push_back(ref);
      }
    } else if (way_depth_ > 0 && std::strcmp(name, "tag") == 0) {
      const char* k = attr(attrs, "k");
      const char* v = attr(attrs, "v");
      if (k != nullptr && v != nullptr) current_.tags.insert_or_assign(k, v);
    }
  }

  void end(const char* name) {
    if (relation_depth_ == depth_ && std::strcmp(name, "relation") == 0) {
      relation_depth_ = 0;
    } else if (way_depth_ == depth_ && std::strcmp(name, "way") == 0) {
      way_depth_ = 0;
      if (current_.tags.contains("highway")) {
        ++out_.stats.ways_retained;
        out_.ways.push_back(std::move(current_));
      }
      current_ = RawWay{};
    }
    --depth_;
  }

  OsmData& out_;
  RawWay current_;
  int depth_ = 0;
  int way_depth_ = 0;
  int relation_depth_ = 0;
  std::int64_t pending_ = 0;
};

/// Chunked reader that transparently inflates gzip input (sniffed by magic).
class MaybeGzipReader {
 public:
  explicit MaybeGzipReader(std::istream& in) : in_(in) {
    in_.read(reinterpret_cast<char*>(head_.data()), 2);
    head_len_ = static_cast<std::size_t>(in_.gcount());
    gzip_ = head_len_ == 2 && head_[0] == 0x1f && head_[1] == 0x8b;
    if (gzip_) {
      std::memset(&zs_, 0, sizeof(zs_));
      if (inflateInit2(&zs_, 15 + 32) != Z_OK) throw FormatError("zlib init failed");
      z_open_ = true;
    }
  }
  ~MaybeGzipReader() {
    if (z_open_) inflateEnd(&zs_);
  }
  MaybeGzipReader(const MaybeGzipReader&) = delete;
  MaybeGzipReader& operator=(const MaybeGzipReader&) = delete;

  /// Fills `buf` with decompressed bytes; returns 0 at end of input.
  std::size_t read(char* buf, std::size_t cap) {
    if (!gzip_) {
      std::size_t n = 0;
      while (head_len_ > 0 && n < cap) {
        buf[n++] = static_cast<char>(head_[2 - head_len_]);
        --head_len_;
      }
      in_.read(buf + n, static_cast<std::streamsize>(cap - n));
      return n + static_cast<std::size_t>(in_.gcount());
    }
    zs_.next_out = reinterpret_cast<Bytef*>(buf);
    zs_.avail_out = static_cast<uInt>(cap);
    while (zs_.avail_out > 0 && !finished_) {
      if (zs_.avail_in == 0) {
        std::size_t n = 0;
        while (head_len_ > 0) {
          raw_[n++] = static_cast<char>(head_[2 - head_len_]);
          --head_len_;
        }
        in_.read(raw_.data() + n, static_cast<std::streamsize>(raw_.size() - n));
        n += static_cast<std::size_t>(in_.gcount());
        if (n == 0) throw FormatError("truncated gzip stream");
        zs_.next_in = reinterpret_cast<Bytef*>(raw_.data());
        zs_.avail_in = static_cast<uInt>(n);
      }
      const int rc = inflate(&zs_, Z_NO_FLUSH);
      if (rc == Z_STREAM_END) {
        // Concatenated gzip members are legal; continue if more input follows.
        if (zs_.avail_in == 0 && in_.peek() == std::char_traits<char>::eof()) {
          finished_ = true;
        } else {
          inflateReset(&zs_);
        }
      } else if (rc != Z_OK && rc != Z_BUF_ERROR) {
        throw FormatError(std::string("gzip inflate error: ") + (zs_.msg ? zs_.msg : "?"));
      }
    }
    return cap - zs_.avail_out;
  }

  bool gzip() const noexcept { return gzip_; }

 private:
  std::istream& in_;
  std::array<unsigned char, 2> head_{};
  std::size_t head_len_ = 0;
  bool gzip_ = false;
  bool z_open_ = false;
  bool finished_ = false;
  z_stream zs_{};
  std::array<char, 1 << 16> raw_{};
};

}  // namespace detail

/// Single streaming pass over an OSM XML document (optionally gzip-compressed).
///
/// Keeps every positioned node and every way with a highway tag; relations are
/// skipped. Way references to nodes that appear later in the file are resolved
/// after the pass; references that never resolve are dropped from the way and
/// counted in `stats.dangling_refs`. Nodes not referenced by a retained way are
/// released afterwards. Malformed XML throws ParseError with the byte offset of
/// the failure in the decompressed stream.
inline OsmData parse_osm_xml(std::istream& in) {
  OsmData out;
  detail::OsmXmlHandler handler(out);
  std::unique_ptr<std::remove_pointer_t<XML_Parser>, decltype(&XML_ParserFree)> parser(
      XML_ParserCreate(nullptr), &XML_ParserFree);
  if (!parser) throw Error("cannot create XML parser");
  XML_SetUserData(parser.get(), &handler);
  XML_SetElementHandler(parser.get(), &detail::OsmXmlHandler::on_start,
                        &detail::OsmXmlHandler::on_end);

  detail::MaybeGzipReader reader(in);
  Sha256 digest;
  std::vector<char> buf(1 << 16);
  for (;;) {
    const std::size_t n = reader.read(buf.data(), buf.size());
    digest.update(buf.data(), n);
    out.stats.bytes += static_cast<std::int64_t>(n);
    const bool last = n == 0;
    if (XML_Parse(parser.get(), buf.data(), static_cast<int>(n), last ? 1 : 0) ==
        XML_STATUS_ERROR) {
      throw ParseError(std::string("malformed OSM XML: ") +
                           XML_ErrorString(XML_GetErrorCode(parser.get())),
                       XML_GetCurrentByteIndex(parser.get()));
    }
    if (last) break;
  }
  out.source_digest = digest.hex();

  std::int64_t dangling = 0;
  std::unordered_set<std::int64_t> referenced;
  for (auto& way : out.ways) {
    auto kept = std::remove_if(way.refs.begin(), way.refs.end(), [&](std::int64_t ref) {
      if (out.nodes.contains(ref)) return false;
      ++dangling;
      return true;
    });
    way.refs.erase(kept, way.refs.end());
    referenced.insert(way.refs.begin(), way.refs.end());
  }
  out.stats.dangling_refs = dangling;
  out.stats.forward_refs = handler.pending_refs() - dangling;
  std::erase_if(out.nodes, [&](const auto& kv) { return !referenced.contains(kv.first); });
  return out;
}

inline OsmData parse_osm_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return parse_osm_xml(in);
}

// ---------------------------------------------------------------------------
// Resolution

struct RoadWay {
  std::int64_t id = 0;
  std::vector<GeoPoint> polyline;
  RoadClass road_class;
  std::string highway_tag;
  friend bool operator==(const RoadWay&, const RoadWay&) = default;
};

struct ResolveStats {
  std::int64_t rejected = 0;     // highway value outside the paved classes
  std::int64_t degenerate = 0;   // warnings: fewer than 2 distinct vertices
  std::int64_t duplicates_removed = 0;
};

/// Replaces node references by positions, drops unpaved ways and collapses
/// consecutive duplicate vertices. Output preserves input way order.
inline std::vector<RoadWay> resolve_ways(const OsmData& data, const RoadClassifier& classifier,
                                         ResolveStats* stats = nullptr) {
  ResolveStats local;
  std::vector<RoadWay> out;
  out.reserve(data.ways.size());
  for (const RawWay& raw : data.ways) {
    auto cls = classifier.classify(raw.tags);
    if (!cls) {
      ++local.rejected;
      continue;
    }
    RoadWay way;
    way.id = raw.id;
    way.road_class = *cls;
    way.highway_tag = raw.tags.find("highway")->second;
    way.polyline.reserve(raw.refs.size());
    for (std::int64_t ref : raw.refs) {
      auto it = data.nodes.find(ref);
      if (it == data.nodes.end()) continue;
      if (!way.polyline.empty() && way.polyline.back() == it->second) {
        ++local.duplicates_removed;
        continue;
      }
      way.polyline.push_back(it->second);
    }
    if (way.polyline.size() < 2) {
      ++local.degenerate;
      continue;
    }
    out.push_back(std::move(way));
  }
  if (stats) *stats = local;
  return out;
}

// ---------------------------------------------------------------------------
// Partitioning

/// The road set of one frame: ways clipped to the frame rectangle expanded by
/// `margin_px`, sorted by way id (pieces of one way keep polyline order).
struct FrameExtract {
  StitchFrame frame;
  double margin_px = 32.0;
  std::vector<RoadWay> ways;
  std::string source_digest;
};

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

/// Axis-aligned rectangle [x0, x1] x [y0, y1].
struct Rect {
  double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;
};

/// Liang-Barsky clip of segment a->b against `r`. On success returns the
/// parameter interval [t0, t1] of the visible part.
inline std::optional<std::pair<double, double>> clip_segment(Vec2 a, Vec2 b, const Rect& r) {
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  double t0 = 0.0, t1 = 1.0;
  const double p[4] = {-dx, dx, -dy, dy};
  const double q[4] = {a.x - r.x0, r.x1 - a.x, a.y - r.y0, r.y1 - a.y};
  for (int i = 0; i < 4; ++i) {
    if (p[i] == 0.0) {
      if (q[i] < 0.0) return std::nullopt;
      continue;
    }
    const double t = q[i] / p[i];
    if (p[i] < 0.0) {
      if (t > t1) return std::nullopt;
      if (t > t0) t0 = t;
    } else {
      if (t < t0) return std::nullopt;
      if (t < t1) t1 = t;
    }
  }
  return std::make_pair(t0, t1);
}

/// World-pixel position (whole Mercator square spans `world_px`).
inline Vec2 world_pixel(const GeoPoint& p, double world_px) noexcept {
  const MercatorPoint m = geo_to_mercator(p);
  return {m.x * world_px, m.y * world_px};
}

inline GeoPoint world_pixel_to_geo(Vec2 v, double world_px) {
  return mercator_to_geo({v.x / world_px, v.y / world_px});
}

namespace detail {

inline Rect expanded_world_rect(const StitchFrame& f, double margin_px) {
  const double ox = static_cast<double>(f.origin().x) * f.tile_px();
  const double oy = static_cast<double>(f.origin().y) * f.tile_px();
  return {ox - margin_px, oy - margin_px, ox + f.size_px() + margin_px,
          oy + f.size_px() + margin_px};
}

/// Clips one way against `r`, appending the visible pieces to `out`.
/// Vertices inside the rectangle are copied verbatim; new vertices are
/// introduced only where the polyline crosses the rectangle boundary.
inline void clip_way(const RoadWay& way, const std::vector<Vec2>& pts, const Rect& r,
                     double world_px, std::vector<RoadWay>& out) {
  RoadWay piece;
  bool open = false;
  auto flush = [&] {
    if (open && piece.polyline.size() >= 2) out.push_back(std::move(piece));
    piece = RoadWay{};
    open = false;
  };
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    auto clip = clip_segment(pts[i], pts[i + 1], r);
    if (!clip) {
      flush();
      continue;
    }
    const auto [t0, t1] = *clip;
    const Vec2 d{pts[i + 1].x - pts[i].x, pts[i + 1].y - pts[i].y};
    auto at = [&](double t, std::size_t verbatim_index, bool verbatim) {
      if (verbatim) return way.polyline[verbatim_index];
      return world_pixel_to_geo({pts[i].x + t * d.x, pts[i].y + t * d.y}, world_px);
    };
    const GeoPoint start = at(t0, i, t0 == 0.0);
    const GeoPoint end = at(t1, i + 1, t1 == 1.0);
    if (!open || t0 != 0.0) {
      flush();
      piece.id = way.id;
      piece.road_class = way.road_class;
      piece.highway_tag = way.highway_tag;
      piece.polyline.push_back(start);
      open = true;
    }
    if (!(piece.polyline.back() == end)) piece.polyline.push_back(end);
    if (t1 != 1.0) flush();
  }
  flush();
}

}  // namespace detail

/// Assigns every way to each frame whose margin-expanded rectangle its
/// polyline intersects, clipping it to that rectangle. Returns one extract per
/// input frame (possibly empty), ordered by frame (z, y, x) and then way id.
/// All frames must share zoom level, grid and tile size.
inline std::vector<FrameExtract> partition_by_frame(const std::vector<RoadWay>& ways,
                                                    std::vector<StitchFrame> frames,
                                                    double margin_px = 32.0,
                                                    std::string source_digest = {},
                                                    int jobs = 1) {
  std::vector<FrameExtract> result;
  if (frames.empty()) return result;
  if (margin_px < 0.0) throw DomainError("negative frame margin");
  std::sort(frames.begin(), frames.end());
  frames.erase(std::unique(frames.begin(), frames.end()), frames.end());
  const StitchFrame& first = frames.front();
  for (const auto& f : frames) {
    if (f.origin().z != first.origin().z || f.grid() != first.grid() ||
        f.tile_px() != first.tile_px()) {
      throw DomainError("frames passed to one partition must share zoom, grid and tile size");
    }
  }
  const double world_px = first.world_px();
  const double frame_px = first.size_px();

  std::map<std::pair<std::int64_t, std::int64_t>, std::size_t> index;  // (fx, fy) -> frame
  for (std::size_t i = 0; i < frames.size(); ++i) {
    index.emplace(std::make_pair(frames[i].origin().x / first.grid(),
                                 frames[i].origin().y / first.grid()),
                  i);
  }

  std::vector<std::vector<Vec2>> projected(ways.size());
  std::vector<std::vector<std::size_t>> candidates(frames.size());
  for (std::size_t w = 0; w < ways.size(); ++w) {
    auto& pts = projected[w];
    pts.reserve(ways[w].polyline.size());
    double x0 = INFINITY, y0 = INFINITY, x1 = -INFINITY, y1 = -INFINITY;
    for (const auto& g : ways[w].polyline) {
      pts.push_back(world_pixel(g, world_px));
      x0 = std::min(x0, pts.back().x);
      x1 = std::max(x1, pts.back().x);
      y0 = std::min(y0, pts.back().y);
      y1 = std::max(y1, pts.back().y);
    }
    if (pts.size() < 2) continue;
    const auto fx0 = static_cast<std::int64_t>(std::floor((x0 - margin_px) / frame_px));
    const auto fx1 = static_cast<std::int64_t>(std::floor((x1 + margin_px) / frame_px));
    const auto fy0 = static_cast<std::int64_t>(std::floor((y0 - margin_px) / frame_px));
    const auto fy1 = static_cast<std::int64_t>(std::floor((y1 + margin_px) / frame_px));
    if ((fx1 - fx0 + 1) * (fy1 - fy0 + 1) <= static_cast<std::int64_t>(index.size())) {
      for (auto fy = fy0; fy <= fy1; ++fy) {
        for (auto fx = fx0; fx <= fx1; ++fx) {
          auto it = index.find({fx, fy});
          if (it != index.end()) candidates[it->second].push_back(w);
        }
      }
    } else {
      for (const auto& [key, i] : index) {
        if (key.first >= fx0 && key.first <= fx1 && key.second >= fy0 && key.second <= fy1) {
          candidates[i].push_back(w);
        }
      }
    }
  }

  result.resize(frames.size());
  parallel_for(frames.size(), jobs, [&](std::size_t i) {
    FrameExtract& ex = result[i];
    ex.frame = frames[i];
    ex.margin_px = margin_px;
    ex.source_digest = source_digest;
    const Rect r = detail::expanded_world_rect(frames[i], margin_px);
    for (std::size_t w : candidates[i]) detail::clip_way(ways[w], projected[w], r, world_px, ex.ways);
    std::stable_sort(ex.ways.begin(), ex.ways.end(),
                     [](const RoadWay& a, const RoadWay& b) { return a.id < b.id; });
  });
  return result;
}

/// Frames (at the given zoom/grid) whose unexpanded rectangle is touched by
/// the bounding box of some way segment. Used when no frame list is given;
/// callers typically drop the extracts that come back empty.
inline std::vector<StitchFrame> frames_covering(const std::vector<RoadWay>& ways, int zoom,
                                                int grid, int tile_px) {
  std::set<std::pair<std::int64_t, std::int64_t>> cells;
  const double world_px = static_cast<double>(TileCoord::tiles_per_side(zoom)) * tile_px;
  const double frame_px = static_cast<double>(grid) * tile_px;
  const std::int64_t last = TileCoord::tiles_per_side(zoom) / grid - 1;
  for (const auto& way : ways) {
    for (std::size_t i = 0; i + 1 < way.polyline.size(); ++i) {
      const Vec2 a = world_pixel(way.polyline[i], world_px);
      const Vec2 b = world_pixel(way.polyline[i + 1], world_px);
      auto cell = [&](double v) {
        return std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(v / frame_px)), 0, last);
      };
      for (auto fy = cell(std::min(a.y, b.y)); fy <= cell(std::max(a.y, b.y)); ++fy) {
        for (auto fx = cell(std::min(a.x, b.x)); fx <= cell(std::max(a.x, b.x)); ++fx) {
          cells.emplace(fx, fy);
        }
      }
    }
  }
  std::vector<StitchFrame> frames;
  frames.reserve(cells.size());
  for (const auto& [fx, fy] : cells) frames.emplace_back(TileCoord{zoom, fx * grid, fy * grid}, grid, tile_px);
  std::sort(frames.begin(), frames.end());
  return frames;
}

}  // namespace roadweave
