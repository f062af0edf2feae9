#include <roadweave/cli.hpp>

#include <gtest/gtest.h>

#include <sstream>

#include "oracles.hpp"
#include "stub_tile_server.hpp"
#include "synthetic.hpp"
#include "temp_dir.hpp"

using namespace roadweave;
using testing_support::TempDir;

namespace {

const fs::path kFixture = fs::path(ROADWEAVE_TEST_FIXTURES) / "tokyo_frame.osm";
const std::string kFrame = "18/232832/103216";

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string last_line(const std::string& s) {
  auto end = s.find_last_not_of('\n');
  auto start = s.rfind('\n', end);
  return s.substr(start == std::string::npos ? 0 : start + 1, end - (start == std::string::npos ? 0 : start + 1) + 1);
}

}  // namespace

TEST(Cli, NoArgumentsPrintsUsageAndFails) {
  const auto r = run_cli({});
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.out.find("Subcommands:"), std::string::npos);
}

TEST(Cli, UnknownSubcommandOrFlagIsUsageError) {
  auto r = run_cli({"frobnicate"});
  EXPECT_EQ(r.code, cli::kExitUsage);
  EXPECT_EQ(last_line(r.err).rfind("error kind=usage", 0), 0u);
  r = run_cli({"density", "--manifest", "m", "--bogus"});
  EXPECT_EQ(r.code, cli::kExitUsage);
}

TEST(Cli, ModuleErrorsAreMachineParseable) {
  const auto r = run_cli({"--quiet", "density", "--manifest", "/nonexistent/manifest.jsonl"});
  EXPECT_EQ(r.code, cli::kExitFailure);
  EXPECT_EQ(r.err.rfind("error kind=io message=\"", 0), 0u);
}

TEST(Cli, ExtractThenRenderMatchesOracle) {
  TempDir dir;
  auto r = run_cli({"--quiet", "extract", "--osm", kFixture.string(), "--out", (dir.path() / "ex").string(),
                    "--frame", kFrame});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "18_232832_103216\t16\n");
  const fs::path bin = dir.path() / "ex" / "18_232832_103216.bin";
  r = run_cli({"--quiet", "render", "--extract", bin.string(), "--out", (dir.path() / "masks").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const BinaryMask mask = decode_mask_png(read_file(dir.path() / "masks" / "18_232832_103216.png"));

  // Oracle: brute-force capsule test over every segment of the clipped extract.
  const FrameExtract ex = read_extract(bin);
  std::vector<oracle::Seg> segs;
  for (const auto& s : frame_strokes(ex)) {
    for (std::size_t i = 0; i + 1 < s.points.size(); ++i) {
      segs.push_back({{s.points[i].x, s.points[i].y}, {s.points[i + 1].x, s.points[i + 1].y}, s.width_px});
    }
  }
  const auto expect = oracle::brute_force_mask(segs, 4096, 4096);
  ASSERT_EQ(mask.pixels.size(), expect.size());
  EXPECT_TRUE(std::equal(expect.begin(), expect.end(), mask.pixels.begin()));
  EXPECT_GT(mask.count(), 0);

  // Rerun is a no-op; a different mask at the same path needs --force.
  r = run_cli({"--quiet", "render", "--extract", bin.string(), "--out", (dir.path() / "masks").string()});
  EXPECT_EQ(r.code, 0) << r.err;
  write_file_atomic(dir.path() / "masks" / "18_232832_103216.png", "different");
  r = run_cli({"--quiet", "render", "--extract", bin.string(), "--out", (dir.path() / "masks").string()});
  EXPECT_EQ(r.code, cli::kExitFailure);
  EXPECT_NE(r.err.find("kind=would-overwrite"), std::string::npos);
}

TEST(Cli, SelectOnSyntheticManifestPicks389) {
  TempDir dir;
  const auto recs = testing_support::synthetic_density_pool(2000, 17);
  {
    Manifest m(dir.path() / "manifest.jsonl", RunHeader{});
    for (const auto& d : recs) {
      ManifestRecord r;
      r.key = d.key;
      r.density = d.density;
      m.append(r);
    }
  }
  const auto r = run_cli({"--quiet", "select", "--manifest", (dir.path() / "manifest.jsonl").string(), "--scale",
                          "1", "--target-density", "0.06563", "--out", (dir.path() / "pool.txt").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_pool(dir.path() / "pool.txt").size(), 389u);
  const auto summary = nlohmann::json::parse(read_file(dir.path() / "pool.txt.summary.json"));
  EXPECT_EQ(summary["report"]["count"], 389);
  EXPECT_FALSE(summary["infeasible"].get<bool>());
}

TEST(Cli, DensityTableGoesToStdout) {
  TempDir dir;
  {
    Manifest m(dir.path() / "manifest.jsonl", RunHeader{});
    ManifestRecord a;
    a.key = "18_0_0";
    a.density = 0.04;
    m.append(a);
    a.key = "18_16_0";
    a.density = 0.06;
    m.append(a);
  }
  const auto r = run_cli({"--quiet", "density", "--manifest", (dir.path() / "manifest.jsonl").string(),
                          "--bin-width", "0.01"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("4\t5\t1\n"), std::string::npos);
  EXPECT_NE(r.out.find("6\t7\t1\n"), std::string::npos);
}

TEST(Cli, ConfigFileAndFlagPrecedence) {
  TempDir dir;
  write_file_atomic(dir.path() / "c.json", R"({"schema":"roadweave.config/1","seed":5,"grid":8})");
  PipelineConfig cfg = load_config(dir.path() / "c.json");
  EXPECT_EQ(cfg.seed, 5u);
  EXPECT_EQ(cfg.grid, 8);
  EXPECT_NE(cfg.digest(), PipelineConfig{}.digest());
  write_file_atomic(dir.path() / "bad.json", R"({"sede":5})");
  EXPECT_THROW(load_config(dir.path() / "bad.json"), FormatError);
  write_file_atomic(dir.path() / "bad2.json", R"({"strokes":{"main":0}})");
  EXPECT_THROW(load_config(dir.path() / "bad2.json"), DomainError);
}

TEST(Cli, EvalReportsPerImageAndAggregate) {
  TempDir dir;
  fs::create_directories(dir.path() / "pred");
  fs::create_directories(dir.path() / "gt");
  Image pred(2, 2, 1), gt(2, 2, 1);
  pred.data = {255, 128, 0, 0};  // 128/255 >= 0.5
  gt.data = {255, 0, 0, 0};
  write_file_atomic(dir.path() / "pred" / "a.png", encode_png(pred));
  write_file_atomic(dir.path() / "gt" / "a.png", encode_png(gt));
  const auto r = run_cli({"--quiet", "eval", "--pred", (dir.path() / "pred").string(), "--gt",
                          (dir.path() / "gt").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream lines(r.out);
  std::string header, row;
  std::getline(lines, header);
  std::getline(lines, row);
  EXPECT_EQ(header, "name\tmiou\tdice_loss");
  EXPECT_EQ(row.rfind("a.png\t0.583333", 0), 0u) << row;
}

TEST(Cli, SmallPipelineIsDeterministic) {
  testing_support::StubTileServer server(64);
  TempDir a, b;
  auto run_once = [&](const fs::path& root) {
    write_file_atomic(root / "cfg.json",
                      R"({"grid":4,"tile_px":64,"patch_px":64,"sample_block":4,"fetch":{"rate_per_s":0}})");
    return run_cli({"--quiet", "--config", (root / "cfg.json").string(), "--seed", "3", "pipeline", "--osm",
                    kFixture.string(), "--out", (root / "out").string(), "--tile-url", server.url_template(),
                    "--cache", (root / "cache").string(), "--n", "10"});
  };
  const auto ra = run_once(a.path());
  ASSERT_EQ(ra.code, 0) << ra.err;
  ASSERT_EQ(run_once(b.path()).code, 0);
  int compared = 0;
  for (const auto& e : fs::recursive_directory_iterator(a.path() / "out")) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), a.path() / "out");
    ASSERT_TRUE(fs::exists(b.path() / "out" / rel)) << rel;
    EXPECT_EQ(read_file(e.path()), read_file(b.path() / "out" / rel)) << rel;
    ++compared;
  }
  EXPECT_GT(compared, 20);
  EXPECT_TRUE(fs::exists(a.path() / "out" / "patches" / "msk_9.png"));
  // A rerun into the same directory is a no-op.
  EXPECT_EQ(run_once(a.path()).code, 0);
}
