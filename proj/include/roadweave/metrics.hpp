#pragma once

// Dice soft loss and mean IoU reference kernels.

#include <roadweave/errors.hpp>
#include <roadweave/parallel.hpp>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace roadweave {

template <class T>
struct Grid {
  int width = 0;
  int height = 0;
  std::vector<T> data;

  Grid() = default;
  Grid(int w, int h, T fill = T{}) : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {
    if (w < 0 || h < 0) throw DomainError("negative grid size");
  }
  Grid(int w, int h, std::vector<T> values) : width(w), height(h), data(std::move(values)) {
    if (w < 0 || h < 0 || data.size() != static_cast<std::size_t>(w) * h) throw DomainError("grid size mismatch");
  }
  T& at(int r, int c) { return data[static_cast<std::size_t>(r) * width + c]; }
  const T& at(int r, int c) const { return data[static_cast<std::size_t>(r) * width + c]; }
  friend bool operator==(const Grid&, const Grid&) = default;
};

using SoftGrid = Grid<double>;
using BinaryGrid = Grid<std::uint8_t>;

inline constexpr double kDefaultSmooth = 1.0;
inline constexpr std::size_t kSumChunk = 4096;

namespace detail {

inline double pairwise_reduce(std::vector<double>& v) {
  // Adjacent-pair tree over chunk partials; fixed order for any thread count.
  while (v.size() > 1) {
    std::vector<double> next((v.size() + 1) / 2);
    for (std::size_t i = 0; i < next.size(); ++i) next[i] = v[2 * i] + (2 * i + 1 < v.size() ? v[2 * i + 1] : 0.0);
    v.swap(next);
  }
  return v.empty() ? 0.0 : v[0];
}

/// Sums fn(i) over [0, n) in fixed chunks reduced pairwise. The chunk
/// partition is independent of `jobs`, so the result is bit-stable.
template <class F>
double chunked_sum(std::size_t n, int jobs, F&& fn) {
  const std::size_t chunks = (n + kSumChunk - 1) / kSumChunk;
  std::vector<double> partial(chunks, 0.0);
  parallel_for(chunks, jobs, [&](std::size_t c) {
    const std::size_t lo = c * kSumChunk;
    const std::size_t hi = std::min(n, lo + kSumChunk);
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += fn(i);
    partial[c] = s;
  });
  return pairwise_reduce(partial);
}

}  // namespace detail

/// 1 - (2*sum(pred*gt) + s) / (sum(pred) + sum(gt) + s). On binary input this
/// is the set form of the dice loss.
inline double dice_loss(const SoftGrid& pred, const SoftGrid& gt, double smooth = kDefaultSmooth, int jobs = 1) {
  if (pred.width != gt.width || pred.height != gt.height) throw DomainError("dice_loss: shape mismatch");
  if (!(smooth > 0.0)) throw DomainError("dice_loss: smooth must be positive");
  for (double v : pred.data) {
    if (!(v >= 0.0 && v <= 1.0)) throw DomainError("dice_loss: prediction outside [0, 1]");
  }
  for (double v : gt.data) {
    if (v != 0.0 && v != 1.0) throw DomainError("dice_loss: ground truth must be 0 or 1");
  }
  const std::size_t n = pred.data.size();
  const double inter = detail::chunked_sum(n, jobs, [&](std::size_t i) { return pred.data[i] * gt.data[i]; });
  const double sp = detail::chunked_sum(n, jobs, [&](std::size_t i) { return pred.data[i]; });
  const double sg = detail::chunked_sum(n, jobs, [&](std::size_t i) { return gt.data[i]; });
  return 1.0 - (2.0 * inter + smooth) / (sp + sg + smooth);
}

struct ClassCounts {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
  friend bool operator==(const ClassCounts&, const ClassCounts&) = default;
};

struct ConfusionCounts {
  ClassCounts background;
  ClassCounts road;

  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    background.tp += o.background.tp;
    background.fp += o.background.fp;
    background.fn += o.background.fn;
    road.tp += o.road.tp;
    road.fp += o.road.fp;
    road.fn += o.road.fn;
    return *this;
  }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

/// Per-class counts; background treats 0 as the positive label.
inline ConfusionCounts confusion(const BinaryGrid& pred, const BinaryGrid& gt) {
  if (pred.width != gt.width || pred.height != gt.height) throw DomainError("confusion: shape mismatch");
  std::int64_t both = 0, pred_only = 0, gt_only = 0, neither = 0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const std::uint8_t p = pred.data[i];
    const std::uint8_t g = gt.data[i];
    if (p > 1 || g > 1) throw DomainError("confusion: masks must be binary");
    if (p && g) {
      ++both;
    } else if (p) {
      ++pred_only;
    } else if (g) {
      ++gt_only;
    } else {
      ++neither;
    }
  }
  ConfusionCounts c;
  c.road = {both, pred_only, gt_only};
  c.background = {neither, gt_only, pred_only};
  return c;
}

/// TP / (TP + FP + FN); an empty union counts as a perfect 1.
inline double iou(const ClassCounts& c) {
  const std::int64_t u = c.tp + c.fp + c.fn;
  return u == 0 ? 1.0 : static_cast<double>(c.tp) / static_cast<double>(u);
}

/// Mean of the two class IoUs, formed as one fraction so that e.g. (1/2 + 2/3)/2
/// yields the double nearest 7/12.
inline double miou(const ConfusionCounts& c) {
  auto frac = [](const ClassCounts& k) -> std::pair<__int128, __int128> {
    const std::int64_t u = k.tp + k.fp + k.fn;
    return u == 0 ? std::pair<__int128, __int128>{1, 1} : std::pair<__int128, __int128>{k.tp, u};
  };
  const auto [n1, d1] = frac(c.background);
  const auto [n2, d2] = frac(c.road);
  const __int128 num = n1 * d2 + n2 * d1;
  const __int128 den = 2 * d1 * d2;
  return static_cast<double>(static_cast<long double>(num) / static_cast<long double>(den));
}

/// 1 where value >= t.
inline BinaryGrid threshold(const SoftGrid& pred, double t = 0.5) {
  if (!(t > 0.0 && t < 1.0)) throw DomainError("threshold must be in (0, 1)");
  BinaryGrid out(pred.width, pred.height);
  for (std::size_t i = 0; i < pred.data.size(); ++i) out.data[i] = pred.data[i] >= t ? 1 : 0;
  return out;
}

inline SoftGrid to_soft(const BinaryGrid& g) {
  SoftGrid out(g.width, g.height);
  for (std::size_t i = 0; i < g.data.size(); ++i) out.data[i] = g.data[i];
  return out;
}

}  // namespace roadweave
