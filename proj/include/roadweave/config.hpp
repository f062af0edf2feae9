#pragma once

// Pipeline configuration: defaults, JSON file overlay and the digest recorded
// in every output manifest. Precedence: defaults < config file < flags.

#include <roadweave/density_curator.hpp>
#include <roadweave/digest.hpp>
#include <roadweave/errors.hpp>
#include <roadweave/fs_util.hpp>
#include <roadweave/imagery_fetch.hpp>
#include <roadweave/osm_ingest.hpp>
#include <roadweave/patch_sampler.hpp>
#include <roadweave/tile_geometry.hpp>

#include <json.hpp>

#include <set>
#include <string>
#include <vector>

namespace roadweave {

inline constexpr const char* kConfigSchema = "roadweave.config/1";

struct PipelineConfig {
  int zoom = kDefaultZoom;
  int grid = kDefaultGrid;
  int tile_px = kDefaultTilePx;
  int patch_px = kDefaultPatchPx;
  StrokeTable strokes;
  std::set<std::string, std::less<>> paved_small = RoadClassifier::default_small();
  double margin_px = 32.0;
  double baseline_pixels = kDefaultBaselinePixels;
  double target_density = kDefaultTargetDensity;
  double tolerance_pp = kDefaultTolerancePp;
  double min_density = 0.0;
  double bin_width = kDefaultHistogramBin;
  std::uint64_t seed = 0;
  int sample_block = kDefaultSampleBlock;
  int sample_workers = 1;
  std::string tile_url;
  fs::path cache_dir = ".roadweave-cache";
  FetchPolicy fetch;

  std::int64_t frame_pixels() const {
    const std::int64_t s = static_cast<std::int64_t>(grid) * tile_px;
    return s * s;
  }
  RoadClassifier classifier() const { return RoadClassifier(strokes, paved_small); }

  void validate() const {
    if (zoom < 0 || zoom > kMaxZoom) throw DomainError("zoom must be in [0, " + std::to_string(kMaxZoom) + "]");
    if (grid <= 0 || tile_px <= 0) throw DomainError("grid and tile_px must be positive");
    if (patch_px <= 0 || patch_px > grid * tile_px) throw DomainError("patch_px must fit inside a frame");
    if (!(margin_px >= 0.0)) throw DomainError("margin_px must be non-negative");
    if (!(baseline_pixels > 0.0)) throw DomainError("baseline_pixels must be positive");
    if (!(target_density >= 0.0 && target_density <= 1.0)) throw DomainError("target_density must be in [0, 1]");
    if (!(tolerance_pp >= 0.0)) throw DomainError("tolerance_pp must be non-negative");
    if (!(bin_width > 0.0 && bin_width <= 1.0)) throw DomainError("bin_width must be in (0, 1]");
    if (sample_block <= 0 || sample_workers <= 0) throw DomainError("sample_block and sample_workers must be positive");
    if (fetch.concurrency <= 0 || fetch.max_attempts <= 0) throw DomainError("fetch concurrency and attempts must be positive");
    classifier();  // validates strokes and the small-road set
  }

  /// The fields that determine artifact bytes. Fetch tuning and paths are
  /// excluded: they change how inputs are obtained, not what is produced.
  nlohmann::ordered_json canonical() const {
    return {{"schema", kConfigSchema},
            {"zoom", zoom},
            {"grid", grid},
            {"tile_px", tile_px},
            {"patch_px", patch_px},
            {"strokes", {{"main", strokes.main}, {"middle", strokes.middle}, {"small", strokes.small}}},
            {"paved_small", std::vector<std::string>(paved_small.begin(), paved_small.end())},
            {"margin_px", margin_px},
            {"baseline_pixels", baseline_pixels},
            {"target_density", target_density},
            {"tolerance_pp", tolerance_pp},
            {"min_density", min_density},
            {"bin_width", bin_width},
            {"seed", seed},
            {"sample_block", sample_block},
            {"sample_workers", sample_workers}};
  }

  nlohmann::ordered_json to_json() const {
    auto j = canonical();
    j["tile_url"] = tile_url;
    j["cache_dir"] = cache_dir.string();
    j["fetch"] = {{"rate_per_s", fetch.rate_per_s}, {"concurrency", fetch.concurrency},
                  {"timeout_s", fetch.timeout_s}, {"max_attempts", fetch.max_attempts},
                  {"backoff_initial_s", fetch.backoff_initial_s}, {"backoff_factor", fetch.backoff_factor},
                  {"offline", fetch.offline}, {"revalidate", fetch.revalidate}};
    return j;
  }

  std::string digest() const { return sha256_hex(canonical().dump()); }

  RunHeader header() const { return RunHeader{ROADWEAVE_VERSION, digest(), seed}; }
};

/// Overlays a JSON document onto `cfg`. Unknown keys are rejected so typos
/// fail loudly.
inline void apply_config_json(PipelineConfig& cfg, const nlohmann::json& j) {
  static const std::set<std::string> known{
      "schema", "zoom", "grid", "tile_px", "patch_px", "strokes", "paved_small", "margin_px",
      "baseline_pixels", "target_density", "tolerance_pp", "min_density", "bin_width", "seed",
      "sample_block", "sample_workers", "tile_url", "cache_dir", "fetch"};
  if (!j.is_object()) throw FormatError("config must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (!known.contains(k)) throw FormatError("unknown config key '" + k + "'");
  }
  if (j.contains("schema") && j["schema"] != kConfigSchema) {
    throw FormatError("unsupported config schema " + j["schema"].dump());
  }
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j[key].get<std::decay_t<decltype(field)>>();
    };
    get("zoom", cfg.zoom);
    get("grid", cfg.grid);
    get("tile_px", cfg.tile_px);
    get("patch_px", cfg.patch_px);
    get("margin_px", cfg.margin_px);
    get("baseline_pixels", cfg.baseline_pixels);
    get("target_density", cfg.target_density);
    get("tolerance_pp", cfg.tolerance_pp);
    get("min_density", cfg.min_density);
    get("bin_width", cfg.bin_width);
    get("seed", cfg.seed);
    get("sample_block", cfg.sample_block);
    get("sample_workers", cfg.sample_workers);
    get("tile_url", cfg.tile_url);
    if (j.contains("cache_dir")) cfg.cache_dir = j["cache_dir"].get<std::string>();
    if (j.contains("strokes")) {
      const auto& s = j["strokes"];
      for (const auto& [k, v] : s.items()) {
        if (k == "main") cfg.strokes.main = v.get<int>();
        else if (k == "middle") cfg.strokes.middle = v.get<int>();
        else if (k == "small") cfg.strokes.small = v.get<int>();
        else throw FormatError("unknown stroke class '" + k + "'");
      }
    }
    if (j.contains("paved_small")) {
      cfg.paved_small.clear();
      for (const auto& v : j["paved_small"]) cfg.paved_small.insert(v.get<std::string>());
    }
    if (j.contains("fetch")) {
      const auto& f = j["fetch"];
      auto fget = [&](const char* key, auto& field) {
        if (f.contains(key)) field = f[key].get<std::decay_t<decltype(field)>>();
      };
      fget("rate_per_s", cfg.fetch.rate_per_s);
      fget("concurrency", cfg.fetch.concurrency);
      fget("timeout_s", cfg.fetch.timeout_s);
      fget("max_attempts", cfg.fetch.max_attempts);
      fget("backoff_initial_s", cfg.fetch.backoff_initial_s);
      fget("backoff_factor", cfg.fetch.backoff_factor);
      fget("offline", cfg.fetch.offline);
      fget("revalidate", cfg.fetch.revalidate);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad config value: ") + e.what());
  }
  cfg.fetch.tile_px = cfg.tile_px;
}

inline PipelineConfig load_config(const fs::path& path) {
  PipelineConfig cfg;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  apply_config_json(cfg, j);
  cfg.validate();
  return cfg;
}

}  // namespace roadweave
