#pragma once

// Command-line front end. Data goes to files and stdout; logs go to stderr as
// `level=... event=... key=value` lines; a failure ends with one
// `error kind=... message="..."` line and a nonzero exit status.

#include <roadweave/config.hpp>
#include <roadweave/density_curator.hpp>
#include <roadweave/errors.hpp>
#include <roadweave/extract_io.hpp>
#include <roadweave/imagery_fetch.hpp>
#include <roadweave/mask_render.hpp>
#include <roadweave/metrics.hpp>
#include <roadweave/osm_ingest.hpp>
#include <roadweave/parallel.hpp>
#include <roadweave/patch_sampler.hpp>
#include <roadweave/stitch_store.hpp>

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace roadweave::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

inline std::string quote(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out += c;
  }
  return out + "\"";
}

class Logger {
 public:
  Logger(std::ostream& err, bool quiet) : err_(err), quiet_(quiet) {}

  void info(std::string_view event, std::initializer_list<std::pair<std::string_view, std::string>> kv = {}) {
    if (!quiet_) write("info", event, kv);
  }
  void warn(std::string_view event, std::initializer_list<std::pair<std::string_view, std::string>> kv = {}) {
    write("warn", event, kv);
  }

 private:
  void write(std::string_view level, std::string_view event,
             std::initializer_list<std::pair<std::string_view, std::string>> kv) {
    std::ostringstream line;
    line << "level=" << level << " event=" << event;
    for (const auto& [k, v] : kv) {
      const bool plain = !v.empty() && v.find_first_of(" \"=\n") == std::string::npos;
      line << ' ' << k << '=' << (plain ? v : quote(v));
    }
    err_ << line.str() << '\n';
  }

  std::ostream& err_;
  bool quiet_;
};

/// Timestamp stamped into manifests. Deterministic unless asked otherwise:
/// SOURCE_DATE_EPOCH when set, else the Unix epoch.
inline std::string artifact_timestamp(bool wall_clock) {
  using clock = std::chrono::system_clock;
  if (wall_clock) return utc_timestamp(clock::now());
  if (const char* e = std::getenv("SOURCE_DATE_EPOCH"); e && *e) {
    try {
      return utc_timestamp(clock::from_time_t(static_cast<std::time_t>(std::stoll(e))));
    } catch (const std::exception&) {
      throw UsageError("SOURCE_DATE_EPOCH must be an integer");
    }
  }
  return utc_timestamp(clock::from_time_t(0));
}

struct Context {
  PipelineConfig cfg;
  int jobs = 1;
  bool force = false;
  std::ostream& out;
  Logger log;
};

// ---------------------------------------------------------------------------
// Operations shared by the single-step subcommands and the pipeline

inline std::vector<StitchFrame> parse_frames(const std::vector<std::string>& keys, const PipelineConfig& cfg) {
  std::vector<StitchFrame> out;
  for (const auto& k : keys) out.emplace_back(parse_tile_key(k), cfg.grid, cfg.tile_px);
  return out;
}

inline std::vector<fs::path> do_extract(Context& ctx, const fs::path& osm, const fs::path& out_dir,
                                        const std::vector<std::string>& frame_keys) {
  const OsmData data = parse_osm_file(osm.string());
  ctx.log.info("parsed", {{"file", osm.string()},
                          {"nodes", std::to_string(data.stats.nodes)},
                          {"ways", std::to_string(data.stats.ways_seen)},
                          {"dangling_refs", std::to_string(data.stats.dangling_refs)}});
  if (data.stats.dangling_refs > 0) {
    ctx.log.warn("dangling-refs", {{"count", std::to_string(data.stats.dangling_refs)}});
  }
  ResolveStats rs;
  const auto ways = resolve_ways(data, ctx.cfg.classifier(), &rs);
  ctx.log.info("classified", {{"retained", std::to_string(ways.size())},
                              {"rejected", std::to_string(rs.rejected)},
                              {"degenerate", std::to_string(rs.degenerate)}});
  auto frames = frame_keys.empty() ? frames_covering(ways, ctx.cfg.zoom, ctx.cfg.grid, ctx.cfg.tile_px)
                                   : parse_frames(frame_keys, ctx.cfg);
  const auto extracts = partition_by_frame(ways, frames, ctx.cfg.margin_px, data.source_digest, ctx.jobs);
  std::vector<fs::path> written;
  for (const auto& ex : extracts) {
    write_extract(out_dir, ex, ctx.force);
    written.push_back(out_dir / (ex.frame.key() + ".bin"));
    ctx.out << ex.frame.key() << '\t' << ex.ways.size() << '\n';
  }
  ctx.log.info("extracted", {{"frames", std::to_string(extracts.size())}, {"out", out_dir.string()}});
  return written;
}

inline void check_extract_shape(const FrameExtract& ex, const PipelineConfig& cfg) {
  if (ex.frame.grid() != cfg.grid || ex.frame.tile_px() != cfg.tile_px || ex.frame.origin().z != cfg.zoom) {
    throw DomainError("extract " + ex.frame.key() + " was made with a different zoom/grid/tile size");
  }
}

inline void do_render(Context& ctx, const std::vector<fs::path>& extracts, const fs::path& out_dir) {
  for (const auto& p : extracts) {
    const FrameExtract ex = read_extract(p);
    const MaskRaster m = render_frame(ex, ctx.jobs);
    write_artifact(out_dir / (ex.frame.key() + ".png"), encode_mask_png(m.mask), ctx.force);
    ctx.out << ex.frame.key() << '\t' << m.road_pixel_count << '\t' << measure_density(m) << '\n';
  }
  ctx.log.info("rendered", {{"frames", std::to_string(extracts.size())}, {"out", out_dir.string()}});
}

inline TileFetcher make_fetcher(const Context& ctx) {
  if (ctx.cfg.tile_url.empty()) throw UsageError("no tile URL: pass --tile-url or set tile_url in the config");
  FetchPolicy p = ctx.cfg.fetch;
  p.tile_px = ctx.cfg.tile_px;
  return TileFetcher(p, ctx.cfg.cache_dir);
}

inline void log_fetch(Context& ctx, const TileFetcher& f) {
  ctx.log.info("fetch-stats", {{"cache_hits", std::to_string(f.stats().cache_hits.load())},
                               {"network", std::to_string(f.stats().network_requests.load())},
                               {"retries", std::to_string(f.stats().retries.load())}});
}

inline void do_fetch(Context& ctx, const std::vector<StitchFrame>& frames) {
  TileFetcher fetcher = make_fetcher(ctx);
  for (const auto& f : frames) {
    fetcher.fetch_frame(f, ctx.cfg.tile_url);
    ctx.out << f.key() << '\t' << f.grid() * f.grid() << '\n';
  }
  log_fetch(ctx, fetcher);
}

inline std::vector<ManifestRecord> do_stitch(Context& ctx, const std::vector<fs::path>& extracts,
                                             const fs::path& out_dir, bool wall_clock) {
  TileFetcher fetcher = make_fetcher(ctx);
  Manifest manifest(out_dir / "manifest.jsonl", ctx.cfg.header());
  PairOptions opt;
  opt.force = ctx.force;
  opt.created_at = artifact_timestamp(wall_clock);
  opt.jobs = ctx.jobs;
  for (const auto& p : extracts) {
    const FrameExtract ex = read_extract(p);
    check_extract_shape(ex, ctx.cfg);
    const auto assets = fetcher.fetch_frame(ex.frame, ctx.cfg.tile_url);
    const auto pair = build_pair(ex.frame, assets, ex, out_dir, manifest, opt);
    ctx.out << ex.frame.key() << '\t' << pair.density << '\n';
  }
  log_fetch(ctx, fetcher);
  ctx.log.info("stitched", {{"frames", std::to_string(extracts.size())}, {"manifest", manifest.path().string()}});
  return manifest.records();
}

inline void do_density(Context& ctx, const fs::path& manifest, const std::optional<fs::path>& out) {
  const auto recs = read_manifest(manifest);
  const auto table = histogram_table(density_histogram(density_records(recs), ctx.cfg.bin_width));
  if (out) {
    write_artifact(*out, table, ctx.force);
  } else {
    ctx.out << table;
  }
  ctx.log.info("histogram", {{"records", std::to_string(recs.size())}});
}

struct SelectArgs {
  double scale = 1.0;
};

inline PoolSelection do_select(Context& ctx, const fs::path& manifest, const SelectArgs& a, const fs::path& pool_out) {
  const auto recs = read_manifest(manifest);
  for (const auto& r : recs) {
    if (r.frame_pixels() != ctx.cfg.frame_pixels()) {
      throw DomainError("manifest frame " + r.key + " does not match the configured frame size");
    }
  }
  PoolSpec spec;
  spec.scale_k = a.scale;
  spec.baseline_pixels = ctx.cfg.baseline_pixels;
  spec.target_mean_density = ctx.cfg.target_density;
  spec.tolerance_pp = ctx.cfg.tolerance_pp;
  spec.min_density = ctx.cfg.min_density;
  spec.frame_pixels = ctx.cfg.frame_pixels();
  const PoolSelection sel = select_pool(density_records(recs), spec);
  write_artifact(pool_out, encode_pool(sel.members), ctx.force);
  fs::path summary = pool_out;
  summary += ".summary.json";
  const auto js = pool_summary(sel, ctx.cfg.header());
  write_artifact(summary, js.dump(2) + "\n", ctx.force);
  ctx.out << js.dump() << '\n';
  if (sel.infeasible) ctx.log.warn("pool-infeasible", {{"diagnostics", sel.diagnostics}});
  ctx.log.info("selected", {{"frames", std::to_string(sel.members.size())}, {"pool", pool_out.string()}});
  return sel;
}

struct SampleArgs {
  std::int64_t n = 0;
};

inline ExportResult do_sample(Context& ctx, const fs::path& pool, const fs::path& manifest, const SampleArgs& a,
                              const fs::path& out_dir) {
  const auto keys = read_pool(pool);
  const auto recs = read_manifest(manifest);
  SampleParams sp;
  sp.seed = ctx.cfg.seed;
  sp.n = a.n;
  sp.patch_px = ctx.cfg.patch_px;
  sp.block = ctx.cfg.sample_block;
  sp.workers = ctx.cfg.sample_workers;
  const auto plan = plan_patches(keys, ctx.cfg.grid * ctx.cfg.tile_px, sp);
  const auto res = export_patches(plan, manifest_loader(recs, manifest.parent_path()), out_dir, ctx.cfg.header(),
                                  ctx.jobs, ctx.force);
  ctx.out << res.patches << '\t' << res.manifest.string() << '\n';
  ctx.log.info("sampled", {{"patches", std::to_string(res.patches)},
                           {"frames_loaded", std::to_string(res.frames_loaded)}});
  return res;
}

inline void do_eval(Context& ctx, const fs::path& pred_dir, const fs::path& gt_dir, double t) {
  std::vector<fs::path> preds;
  for (const auto& e : fs::directory_iterator(pred_dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") preds.push_back(e.path());
  }
  std::sort(preds.begin(), preds.end());
  if (preds.empty()) throw IoError("no PNG predictions in " + pred_dir.string());
  ctx.out << "name\tmiou\tdice_loss\n";
  ConfusionCounts pooled;
  double sum_miou = 0.0, sum_dice = 0.0;
  for (const auto& p : preds) {
    const fs::path g = gt_dir / p.filename();
    if (!fs::exists(g)) throw IoError("no ground truth for " + p.filename().string());
    const Image pi = decode_png(read_file(p));
    const Image gi = decode_png(read_file(g));
    if (pi.width != gi.width || pi.height != gi.height) throw DomainError(p.filename().string() + ": size mismatch");
    SoftGrid soft(pi.width, pi.height);
    BinaryGrid gt(gi.width, gi.height);
    for (std::size_t i = 0; i < soft.data.size(); ++i) {
      soft.data[i] = pi.data[i * static_cast<std::size_t>(pi.channels)] / 255.0;
      gt.data[i] = gi.data[i * static_cast<std::size_t>(gi.channels)] != 0;
    }
    const auto c = confusion(threshold(soft, t), gt);
    pooled += c;
    const double m = miou(c);
    const double d = dice_loss(soft, to_soft(gt), kDefaultSmooth, ctx.jobs);
    sum_miou += m;
    sum_dice += d;
    ctx.out << p.filename().string() << '\t' << m << '\t' << d << '\n';
  }
  const double n = static_cast<double>(preds.size());
  ctx.out << "mean\t" << sum_miou / n << '\t' << sum_dice / n << '\n';
  ctx.out << "pooled\t" << miou(pooled) << "\t-\n";
}

// ---------------------------------------------------------------------------

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"roadweave: road-mask training pairs from map tiles and OSM roads", "roadweave"};
  app.set_version_flag("--version", std::string(ROADWEAVE_VERSION));
  app.require_subcommand(1);
  app.fallthrough();

  std::optional<std::string> config_path;
  std::optional<int> jobs;
  std::optional<std::uint64_t> seed;
  bool force = false, quiet = false;
  app.add_option("--config", config_path, "JSON config file (schema roadweave.config/1)");
  app.add_option("--jobs", jobs, "Worker threads (default: available parallelism)")->check(CLI::PositiveNumber);
  app.add_option("--seed", seed, "Global seed");
  app.add_flag("--force", force, "Overwrite differing existing artifacts");
  app.add_flag("--quiet", quiet, "Suppress informational logs");

  // Config overrides available to every subcommand.
  std::optional<std::string> tile_url, cache_dir;
  std::optional<bool> offline;
  std::optional<double> rate;
  std::optional<int> concurrency;
  auto add_fetch_opts = [&](CLI::App* s) {
    s->add_option("--tile-url,--template", tile_url, "Tile URL template with {z}/{x}/{y} (optional {key})");
    s->add_option("--cache,--cache-dir", cache_dir, "Tile cache directory");
    s->add_flag("--offline", offline, "Fail on any cache miss instead of fetching");
    s->add_option("--rate", rate, "Max requests per second");
    s->add_option("--concurrency", concurrency, "Max in-flight requests");
  };

  std::string osm;
  std::string out_dir;
  std::vector<std::string> frame_keys;
  std::vector<std::string> extract_paths;
  std::string manifest_path;
  std::string pool_path;
  std::optional<std::string> table_out;
  std::optional<double> bin_width, target, tolerance, baseline, min_density;
  SelectArgs sel_args;
  SampleArgs sample_args;
  std::optional<int> size, block, workers;
  std::string pred_dir, gt_dir;
  double eval_threshold = 0.5;
  bool wall_clock = false;

  auto* extract = app.add_subcommand("extract", "Parse OSM XML and write per-frame road extracts");
  extract->add_option("--osm", osm, "OSM XML file (optionally gzip)")->required();
  extract->add_option("--out", out_dir, "Output directory")->required();
  extract->add_option("--frame", frame_keys, "Frame origin tile z/x/y (default: all frames touched)");

  auto* render = app.add_subcommand("render", "Rasterize extracts into binary mask PNGs");
  render->add_option("--extract", extract_paths, "Extract file(s) (.bin)")->required();
  render->add_option("--out", out_dir, "Output directory")->required();

  auto* fetch = app.add_subcommand("fetch", "Download and cache all tiles of frames");
  std::optional<std::string> frames_manifest;
  fetch->add_option("--frame", frame_keys, "Frame origin tile z/x/y");
  fetch->add_option("--frames-manifest", frames_manifest, "File of frame keys, one per line");
  add_fetch_opts(fetch);

  auto* stitch = app.add_subcommand("stitch", "Build (image, mask) pairs and the manifest");
  stitch->add_option("--extract", extract_paths, "Extract file(s) (.bin)")->required();
  stitch->add_option("--out", out_dir, "Output directory (manifest.jsonl, images/, masks/)")->required();
  stitch->add_flag("--wall-clock", wall_clock, "Stamp records with the current time");
  add_fetch_opts(stitch);

  auto* density = app.add_subcommand("density", "Density histogram of a manifest");
  density->add_option("--manifest", manifest_path, "manifest.jsonl")->required();
  density->add_option("--bin-width", bin_width, "Bin width as a fraction (default 0.0025)");
  density->add_option("--out", table_out, "Write the table here instead of stdout");

  auto* select = app.add_subcommand("select", "Select a pool matching a target mean density");
  select->add_option("--manifest", manifest_path, "manifest.jsonl")->required();
  select->add_option("--scale", sel_args.scale, "Scale k relative to the baseline")->check(CLI::PositiveNumber);
  select->add_option("--target-density", target, "Target mean density (fraction)");
  select->add_option("--tolerance-pp", tolerance, "Tolerance in percentage points");
  select->add_option("--baseline", baseline, "Baseline pixel count (1x)");
  select->add_option("--min-density", min_density, "Drop candidates below this density");
  select->add_option("--out", pool_path, "Pool file (one key per line)")->required();

  auto* sample = app.add_subcommand("sample", "Export random patches from a pool");
  sample->add_option("--pool", pool_path, "Pool file")->required();
  sample->add_option("--manifest", manifest_path, "manifest.jsonl of the stored pairs")->required();
  sample->add_option("--n", sample_args.n, "Number of patches")->required();
  sample->add_option("--size", size, "Patch size in pixels");
  sample->add_option("--block", block, "Patches drawn per frame load");
  sample->add_option("--workers", workers, "Sampler substreams (part of the lineage)");
  sample->add_option("--out", out_dir, "Output directory")->required();

  auto* eval = app.add_subcommand("eval", "mIoU and dice loss of predicted masks");
  eval->add_option("--pred", pred_dir, "Directory of predicted 8-bit PNGs")->required();
  eval->add_option("--gt", gt_dir, "Directory of ground-truth mask PNGs")->required();
  eval->add_option("--threshold", eval_threshold, "Binarization threshold (>=)");

  auto* pipeline = app.add_subcommand("pipeline", "extract, stitch, density, select and sample in one run");
  pipeline->add_option("--osm", osm, "OSM XML file")->required();
  pipeline->add_option("--out", out_dir, "Output directory")->required();
  pipeline->add_option("--frame", frame_keys, "Restrict to these frames");
  pipeline->add_option("--scale", sel_args.scale, "Pool scale k")->check(CLI::PositiveNumber);
  pipeline->add_option("--target-density", target, "Target mean density (fraction)");
  pipeline->add_option("--n", sample_args.n, "Number of patches")->required();
  pipeline->add_option("--size", size, "Patch size in pixels");
  pipeline->add_option("--block", block, "Patches drawn per frame load");
  pipeline->add_flag("--wall-clock", wall_clock, "Stamp records with the current time");
  add_fetch_opts(pipeline);

  if (args.empty()) {
    out << app.help();
    err << "error kind=usage message=" << quote("a subcommand is required") << '\n';
    return kExitUsage;
  }
  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << app.help();
    err << "error kind=usage message=" << quote(e.what()) << '\n';
    return kExitUsage;
  }

  try {
    PipelineConfig cfg = config_path ? load_config(*config_path) : PipelineConfig{};
    if (seed) cfg.seed = *seed;
    if (tile_url) cfg.tile_url = *tile_url;
    if (cache_dir) cfg.cache_dir = *cache_dir;
    if (offline) cfg.fetch.offline = *offline;
    if (rate) cfg.fetch.rate_per_s = *rate;
    if (concurrency) cfg.fetch.concurrency = *concurrency;
    if (bin_width) cfg.bin_width = *bin_width;
    if (target) cfg.target_density = *target;
    if (tolerance) cfg.tolerance_pp = *tolerance;
    if (baseline) cfg.baseline_pixels = *baseline;
    if (min_density) cfg.min_density = *min_density;
    if (size) cfg.patch_px = *size;
    if (block) cfg.sample_block = *block;
    if (workers) cfg.sample_workers = *workers;
    cfg.validate();

    Context ctx{cfg, jobs.value_or(default_jobs()), force, out, Logger(err, quiet)};
    ctx.log.info("start", {{"command", app.get_subcommands().front()->get_name()},
                           {"config_digest", cfg.digest()},
                           {"seed", std::to_string(cfg.seed)},
                           {"version", ROADWEAVE_VERSION}});
    auto paths = [](const std::vector<std::string>& v) { return std::vector<fs::path>(v.begin(), v.end()); };

    if (*extract) {
      do_extract(ctx, osm, out_dir, frame_keys);
    } else if (*render) {
      do_render(ctx, paths(extract_paths), out_dir);
    } else if (*fetch) {
      if (frames_manifest) {
        for (const auto& k : read_pool(*frames_manifest)) frame_keys.push_back(k);
      }
      if (frame_keys.empty()) throw UsageError("fetch needs --frame or --frames-manifest");
      do_fetch(ctx, parse_frames(frame_keys, cfg));
    } else if (*stitch) {
      do_stitch(ctx, paths(extract_paths), out_dir, wall_clock);
    } else if (*density) {
      do_density(ctx, manifest_path, table_out ? std::optional<fs::path>(*table_out) : std::nullopt);
    } else if (*select) {
      do_select(ctx, manifest_path, sel_args, pool_path);
    } else if (*sample) {
      do_sample(ctx, pool_path, manifest_path, sample_args, out_dir);
    } else if (*eval) {
      do_eval(ctx, pred_dir, gt_dir, eval_threshold);
    } else if (*pipeline) {
      const fs::path root(out_dir);
      const auto extracts = do_extract(ctx, osm, root / "extracts", frame_keys);
      do_stitch(ctx, extracts, root / "pairs", wall_clock);
      const fs::path manifest = root / "pairs" / "manifest.jsonl";
      do_density(ctx, manifest, root / "density.tsv");
      do_select(ctx, manifest, sel_args, root / "pool.txt");
      do_sample(ctx, root / "pool.txt", manifest, sample_args, root / "patches");
    }
    ctx.log.info("done");
    return kExitOk;
  } catch (const UsageError& e) {
    err << "error kind=usage message=" << quote(e.what()) << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "error kind=" << e.kind() << " message=" << quote(e.what()) << '\n';
    return kExitFailure;
  } catch (const fs::filesystem_error& e) {
    err << "error kind=io message=" << quote(e.what()) << '\n';
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "error kind=internal message=" << quote(e.what()) << '\n';
    return kExitFailure;
  }
}

}  // namespace roadweave::cli
