#pragma once

// Exact one-dimensional k-means by dynamic programming, selection of the
// number of effect levels by an error threshold, and merging of pre-clusters
// into subpopulations.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "pcm/domain.hpp"
#include "pcm/error.hpp"
#include "pcm/precluster.hpp"

namespace pcm {

struct OneDClustering {
  std::size_t k = 0;
  std::vector<double> centers;          // ascending
  std::vector<std::size_t> boundaries;  // k-1 start positions (sorted order) of groups 2..k
  double err = 0.0;                     // mean squared deviation from assigned center
  std::vector<std::size_t> group;       // per input value, group index
};

/// Globally optimal squared-error partition of `values` into k contiguous
/// groups of the sorted order. Among equal optima the lexicographically
/// smallest boundary vector is returned. O(K^2 k) time.
inline OneDClustering optimal_1d_clustering(std::span<const double> values, std::size_t k) {
  const std::size_t n = values.size();
  if (k < 1 || k > n)
    throw Error(ErrorKind::OutOfRange, "k=" + std::to_string(k) + " outside [1, " + std::to_string(n) + "]");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });

  // Prefix sums of centred values keep the cancellation in S2 - S1^2/len small.
  double shift = 0.0;
  for (double v : values) shift += v;
  shift /= static_cast<double>(n);
  std::vector<double> s1(n + 1, 0.0), s2(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double w = values[order[i]] - shift;
    s1[i + 1] = s1[i] + w;
    s2[i + 1] = s2[i] + w * w;
  }
  auto cost = [&](std::size_t a, std::size_t b) {  // sorted positions [a, b)
    const double sum = s1[b] - s1[a];
    const double c = (s2[b] - s2[a]) - sum * sum / static_cast<double>(b - a);
    return c > 0.0 ? c : 0.0;
  };

  // best[g][j]: optimal cost of sorted suffix [j, n) split into g groups.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> best(k + 1, std::vector<double>(n + 1, inf));
  for (std::size_t j = 0; j < n; ++j) best[1][j] = cost(j, n);
  for (std::size_t g = 2; g <= k; ++g) {
    for (std::size_t j = 0; j + g <= n; ++j) {
      double bv = inf;
      for (std::size_t b = j + 1; b + g - 1 <= n; ++b) bv = std::min(bv, cost(j, b) + best[g - 1][b]);
      best[g][j] = bv;
    }
  }

  OneDClustering out;
  out.k = k;
  const double tol = 1e-13 * (1.0 + best[1][0]);
  std::size_t start = 0;
  for (std::size_t g = k; g >= 2; --g) {
    const double target = best[g][start];
    std::size_t pick = start + 1;
    for (std::size_t b = start + 1; b + g - 1 <= n; ++b) {
      if (cost(start, b) + best[g - 1][b] <= target + tol) {
        pick = b;
        break;
      }
    }
    out.boundaries.push_back(pick);
    start = pick;
  }

  out.group.assign(n, 0);
  out.centers.assign(k, 0.0);
  double sse = 0.0;
  for (std::size_t g = 0; g < k; ++g) {
    const std::size_t a = g == 0 ? 0 : out.boundaries[g - 1];
    const std::size_t b = g + 1 == k ? n : out.boundaries[g];
    double sum = 0.0;
    double lo = values[order[a]], hi = values[order[a]];
    for (std::size_t i = a; i < b; ++i) {
      const double v = values[order[i]];
      sum += v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      out.group[order[i]] = g;
    }
    const double center = lo == hi ? lo : sum / static_cast<double>(b - a);
    out.centers[g] = center;
    for (std::size_t i = a; i < b; ++i) {
      const double diff = values[order[i]] - center;
      sse += diff * diff;
    }
  }
  out.err = sse / static_cast<double>(n);
  return out;
}

/// tau(n) = multiplier * ln(n) / n^(1/(2d)).
inline double level_threshold(std::size_t n, std::size_t d, double tau_multiplier) {
  const double nn = static_cast<double>(n);
  return tau_multiplier * std::log(nn) / std::pow(nn, 1.0 / (2.0 * static_cast<double>(d)));
}

struct LevelSelection {
  std::size_t ell_hat = 0;
  std::vector<std::pair<std::size_t, double>> err_curve;
  double tau = 0.0;
  bool did_not_converge = false;
  OneDClustering clustering;  // optimal clustering at ell_hat
};

/// Smallest k in [1, k_max] whose optimal error is at most tau. Every k up to
/// min(k_max, #values) is evaluated so the whole error curve is reported.
/// A nonzero `fixed_levels` pins ell_hat instead of thresholding.
inline LevelSelection select_num_levels(std::span<const double> values, std::size_t n, std::size_t d,
                                        double tau_multiplier, std::size_t k_max, std::size_t fixed_levels = 0) {
  if (values.empty()) throw Error(ErrorKind::SampleTooSmall, "no cluster effects to merge");
  if (k_max < 1) throw Error(ErrorKind::OutOfRange, "k_max must be >= 1");
  LevelSelection sel;
  sel.tau = level_threshold(n, d, tau_multiplier);
  const std::size_t last = std::min(k_max, values.size());
  std::vector<OneDClustering> fits;
  for (std::size_t k = 1; k <= last; ++k) {
    fits.push_back(optimal_1d_clustering(values, k));
    sel.err_curve.emplace_back(k, fits.back().err);
  }
  if (fixed_levels > 0) {
    sel.ell_hat = std::min(fixed_levels, values.size());
    sel.clustering = sel.ell_hat <= last ? fits[sel.ell_hat - 1] : optimal_1d_clustering(values, sel.ell_hat);
    return sel;
  }
  for (std::size_t k = 1; k <= last; ++k) {
    if (fits[k - 1].err <= sel.tau) {
      sel.ell_hat = k;
      sel.clustering = fits[k - 1];
      return sel;
    }
  }
  sel.ell_hat = last;
  sel.did_not_converge = true;
  sel.clustering = fits.back();
  return sel;
}

namespace detail {

struct LevelSet {
  std::vector<std::vector<std::size_t>> members;  // ascending subject indices
  std::vector<double> mu;
};

// Computes each level's effect, drops empty levels and orders levels by
// effect (ties keep their previous order). Fills the model fields.
inline void finalize_levels(const EffectInput& in, LevelSet set, LevelModel& model) {
  std::vector<std::size_t> keep;
  for (std::size_t g = 0; g < set.members.size(); ++g) {
    if (set.members[g].empty()) {
      ++model.empty_levels_removed;
      continue;
    }
    set.mu[g] = effect_of(in, set.members[g]);
    keep.push_back(g);
  }
  std::stable_sort(keep.begin(), keep.end(), [&](std::size_t a, std::size_t b) { return set.mu[a] < set.mu[b]; });
  model.ell_hat = keep.size();
  model.mu_hat.assign(keep.size(), 0.0);
  model.assignment.assign(in.data->n(), -1);
  for (std::size_t level = 0; level < keep.size(); ++level) {
    model.mu_hat[level] = set.mu[keep[level]];
    for (std::size_t idx : set.members[keep[level]]) model.assignment[idx] = static_cast<int>(level);
  }
}

}  // namespace detail

/// Each cluster joins the level of its ATT's group; a level's effect is the
/// point-weighted mean effect over the union of its clusters.
inline LevelModel merge_to_subpopulations(const PreClustering& pc, const OneDClustering& oned, const EffectInput& in) {
  if (oned.group.size() != pc.clusters.size())
    throw Error(ErrorKind::OutOfRange, "1-D clustering does not match the pre-clustering");
  detail::LevelSet set;
  set.members.resize(oned.k);
  set.mu.assign(oned.k, 0.0);
  for (std::size_t j = 0; j < pc.clusters.size(); ++j) {
    auto& dst = set.members[oned.group[j]];
    dst.insert(dst.end(), pc.clusters[j].members.begin(), pc.clusters[j].members.end());
  }
  for (auto& m : set.members) std::sort(m.begin(), m.end());
  LevelModel model;
  detail::finalize_levels(in, std::move(set), model);
  return model;
}

}  // namespace pcm
