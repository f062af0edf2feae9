#pragma once

// Density statistics over a manifest and selection of fixed-size pools whose
// mean road density matches a target.

#include <roadweave/errors.hpp>
#include <roadweave/fs_util.hpp>
#include <roadweave/stitch_store.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iterator>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace roadweave {

/// Pixel count of the reference (1x) pool.
inline constexpr double kDefaultBaselinePixels = 6.528e9;
/// Alternative baseline for pools sized against the smaller reference set.
inline constexpr double kMassBaselinePixels = 2.601e9;
/// Reference-set mean density. The prose elsewhere quotes 4.644%; the table
/// value is used.
inline constexpr double kReferenceMeanDensity = 0.04664;
inline constexpr double kDefaultTargetDensity = 0.06563;
inline constexpr double kDefaultHistogramBin = 0.0025;
inline constexpr double kDefaultTolerancePp = 0.05;

struct DensityRecord {
  std::string key;
  double density = 0.0;
  friend bool operator==(const DensityRecord&, const DensityRecord&) = default;
};

inline std::vector<DensityRecord> density_records(std::span<const ManifestRecord> manifest) {
  std::vector<DensityRecord> out;
  out.reserve(manifest.size());
  for (const auto& r : manifest) out.push_back({r.key, r.density});
  return out;
}

// ---------------------------------------------------------------------------
// Histogram

struct HistogramBin {
  double lo = 0.0;
  double hi = 0.0;
  std::int64_t count = 0;
};

struct DensityHistogram {
  double bin_width = kDefaultHistogramBin;
  std::vector<std::int64_t> counts;

  double lo(std::size_t k) const { return static_cast<double>(k) * bin_width; }
  double hi(std::size_t k) const { return static_cast<double>(k + 1) * bin_width; }
  std::int64_t total() const {
    std::int64_t t = 0;
    for (auto c : counts) t += c;
    return t;
  }
};

/// Bin k holds densities in [k*w, (k+1)*w). A value within 1e-9 (relative)
/// of an edge is snapped onto it, so 0.06 with 1 pp bins lands in bin 6.
inline std::size_t histogram_bin(double d, double w) {
  const double q = d / w;
  const double r = std::nearbyint(q);
  const double idx = std::abs(q - r) <= 1e-9 * std::max(1.0, std::abs(q)) ? r : std::floor(q);
  return static_cast<std::size_t>(std::max(0.0, idx));
}

inline DensityHistogram density_histogram(std::span<const DensityRecord> records,
                                          double bin_width = kDefaultHistogramBin) {
  if (!(bin_width > 0.0) || bin_width > 1.0) throw DomainError("histogram bin width must be in (0, 1]");
  if (records.empty()) throw DomainError("density histogram needs a non-empty manifest");
  double max_d = 0.0;
  for (const auto& r : records) {
    if (!(r.density >= 0.0 && r.density <= 1.0)) {
      throw DomainError("density of " + r.key + " is outside [0, 1]");
    }
    max_d = std::max(max_d, r.density);
  }
  DensityHistogram h;
  h.bin_width = bin_width;
  h.counts.assign(histogram_bin(max_d, bin_width) + 1, 0);
  for (const auto& r : records) ++h.counts[histogram_bin(r.density, bin_width)];
  return h;
}

/// Tab-separated table in percent: lo_pct, hi_pct, count.
inline std::string histogram_table(const DensityHistogram& h) {
  std::ostringstream os;
  os.precision(6);
  os << "lo_pct\thi_pct\tcount\n";
  for (std::size_t k = 0; k < h.counts.size(); ++k) {
    os << h.lo(k) * 100.0 << '\t' << h.hi(k) * 100.0 << '\t' << h.counts[k] << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Pool selection

struct PoolSpec {
  double scale_k = 1.0;
  double baseline_pixels = kDefaultBaselinePixels;
  double target_mean_density = kDefaultTargetDensity;
  double tolerance_pp = kDefaultTolerancePp;
  double min_density = 0.0;
  std::int64_t frame_pixels = 4096LL * 4096LL;

  std::int64_t implied_count() const {
    if (!(scale_k > 0.0) || !(baseline_pixels > 0.0) || frame_pixels <= 0) {
      throw DomainError("pool scale, baseline and frame size must be positive");
    }
    return std::llround(scale_k * baseline_pixels / static_cast<double>(frame_pixels));
  }
};

struct PoolSelection {
  PoolSpec spec;
  std::vector<std::string> members;  // sorted by key
  double achieved_mean = 0.0;
  std::int64_t achieved_pixels = 0;
  double min_density = 0.0;
  double max_density = 0.0;
  bool infeasible = false;
  std::string diagnostics;
};

/// Greedy balance: each step adds the unused candidate whose density brings
/// the running mean closest to the target (equivalently, the candidate
/// nearest to target*(n+1) - sum), ties broken by ascending key. The result
/// does not depend on input order.
inline PoolSelection select_pool(std::span<const DensityRecord> records, const PoolSpec& spec) {
  if (!(spec.target_mean_density >= 0.0 && spec.target_mean_density <= 1.0)) {
    throw DomainError("target density must be in [0, 1]");
  }
  if (!(spec.tolerance_pp >= 0.0)) throw DomainError("tolerance must be non-negative");
  PoolSelection sel;
  sel.spec = spec;
  const std::int64_t want = spec.implied_count();

  struct Cand {
    double d;
    std::string key;
    bool operator<(const Cand& o) const { return d != o.d ? d < o.d : key < o.key; }
  };
  std::set<Cand> pool;
  for (const auto& r : records) {
    if (!(r.density >= 0.0 && r.density <= 1.0)) throw DomainError("density of " + r.key + " is outside [0, 1]");
    if (r.density < spec.min_density) continue;
    if (!pool.insert({r.density, r.key}).second) throw DuplicateKeyError("duplicate frame key " + r.key);
  }
  {
    std::set<std::string> keys;
    for (const auto& c : pool) {
      if (!keys.insert(c.key).second) throw DuplicateKeyError("duplicate frame key " + c.key);
    }
  }

  const double t = spec.target_mean_density;
  double sum = 0.0;
  double comp = 0.0;  // Neumaier compensation for the running sum
  auto add = [&](double v) {
    const double s = sum + v;
    comp += std::abs(sum) >= std::abs(v) ? (sum - s) + v : (v - s) + sum;
    sum = s;
  };
  std::int64_t n = 0;
  while (n < want && !pool.empty()) {
    const double ideal = t * static_cast<double>(n + 1) - (sum + comp);
    // Nearest candidates on either side of the ideal density.
    auto hi = pool.lower_bound(Cand{ideal, std::string()});
    auto pick = pool.end();
    if (hi != pool.end()) pick = hi;
    if (hi != pool.begin()) {
      auto lo = std::prev(hi);
      // Smallest key among those sharing the low candidate's density.
      auto lo_first = pool.lower_bound(Cand{lo->d, std::string()});
      if (pick == pool.end()) {
        pick = lo_first;
      } else {
        const double dl = ideal - lo->d;
        const double dh = pick->d - ideal;
        if (dl < dh || (dl == dh && lo_first->key < pick->key)) pick = lo_first;
      }
    }
    add(pick->d);
    sel.members.push_back(pick->key);
    sel.min_density = n == 0 ? pick->d : std::min(sel.min_density, pick->d);
    sel.max_density = n == 0 ? pick->d : std::max(sel.max_density, pick->d);
    pool.erase(pick);
    ++n;
  }
  std::sort(sel.members.begin(), sel.members.end());
  sel.achieved_mean = n > 0 ? (sum + comp) / static_cast<double>(n) : 0.0;
  sel.achieved_pixels = n * spec.frame_pixels;

  std::ostringstream diag;
  if (n < want) {
    sel.infeasible = true;
    diag << "only " << n << " eligible frame(s), " << want << " required";
  }
  const double err_pp = std::abs(sel.achieved_mean - t) * 100.0;
  if (n > 0 && err_pp > spec.tolerance_pp + 1e-12) {
    sel.infeasible = true;
    if (!diag.str().empty()) diag << "; ";
    diag << "achieved mean " << sel.achieved_mean * 100.0 << "% misses target " << t * 100.0 << "% by "
         << err_pp << " pp";
  }
  sel.diagnostics = diag.str();
  return sel;
}

struct PoolReport {
  std::int64_t count = 0;
  std::int64_t pixels = 0;
  double mean_density = 0.0;
  double min_density = 0.0;
  double max_density = 0.0;
  friend bool operator==(const PoolReport&, const PoolReport&) = default;
};

inline PoolReport pool_report(const PoolSelection& sel) {
  PoolReport r;
  r.count = static_cast<std::int64_t>(sel.members.size());
  if (r.count == 0) return r;
  r.pixels = sel.achieved_pixels;
  r.mean_density = sel.achieved_mean;
  r.min_density = sel.min_density;
  r.max_density = sel.max_density;
  return r;
}

inline nlohmann::ordered_json to_json(const PoolReport& r) {
  return {{"count", r.count}, {"pixels", r.pixels}, {"mean_density", r.mean_density},
          {"min_density", r.min_density}, {"max_density", r.max_density}};
}

inline nlohmann::ordered_json pool_summary(const PoolSelection& sel, const RunHeader& header) {
  return {{"schema", "roadweave.pool/1"},
          {"version", header.version},
          {"config_digest", header.config_digest},
          {"seed", header.seed},
          {"scale_k", sel.spec.scale_k},
          {"baseline_pixels", sel.spec.baseline_pixels},
          {"target_mean_density", sel.spec.target_mean_density},
          {"tolerance_pp", sel.spec.tolerance_pp},
          {"min_density_filter", sel.spec.min_density},
          {"frame_pixels", sel.spec.frame_pixels},
          {"implied_count", sel.spec.implied_count()},
          {"report", to_json(pool_report(sel))},
          {"infeasible", sel.infeasible},
          {"diagnostics", sel.diagnostics}};
}

/// Pool file: one frame key per line.
inline std::string encode_pool(std::span<const std::string> keys) {
  std::string out;
  for (const auto& k : keys) out += k + "\n";
  return out;
}

inline std::vector<std::string> read_pool(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

}  // namespace roadweave
