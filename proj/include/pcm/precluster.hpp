#pragma once

// Pre-clustering of feature space into about sqrt(n) clusters and the
// per-cluster ATT. Two partitioners: epsilon-net boxes and k-means.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "pcm/counterfactual.hpp"
#include "pcm/domain.hpp"
#include "pcm/error.hpp"
#include "pcm/grid.hpp"
#include "pcm/rng.hpp"

namespace pcm {

/// Subjects that take part in a fit together with their effect data.
struct EffectInput {
  const Dataset* data = nullptr;
  std::vector<std::size_t> eligible;  // ascending subject indices
  std::vector<double> ite;            // index-aligned with data, NaN if undefined
  bool control_diff = false;          // cluster effects from arm means instead of ITEs

  std::size_t n() const noexcept { return eligible.size(); }
};

inline std::vector<double> ite_vector(const Dataset& data) {
  std::vector<double> out(data.n(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t i = 0; i < data.n(); ++i)
    if (data.subjects[i].ybar) out[i] = compute_ite(data.subjects[i]);
  return out;
}

/// Builds the effect input for a dataset whose counterfactuals are already
/// attached (see attach_counterfactuals).
inline EffectInput make_effect_input(const Dataset& data, CfMode mode) {
  EffectInput in;
  in.data = &data;
  in.eligible = eligible_subjects(data, mode);
  in.control_diff = mode == CfMode::ControlDiff;
  if (in.control_diff) {
    in.ite.assign(data.n(), std::numeric_limits<double>::quiet_NaN());
  } else {
    in.ite = ite_vector(data);
    for (std::size_t i : in.eligible)
      if (std::isnan(in.ite[i]))
        throw Error(ErrorKind::MissingCounterfactual, "eligible subject " + std::to_string(i) + " has no ITE");
  }
  return in;
}

/// Mean effect over members: mean ITE, or treated-minus-control outcome in
/// control-difference mode. Members must be ascending.
inline double effect_of(const EffectInput& in, std::span<const std::size_t> members) {
  if (in.control_diff) return control_diff_att(*in.data, members);
  double sum = 0.0;
  for (std::size_t idx : members) sum += in.ite[idx];
  return sum / static_cast<double>(members.size());
}

struct Cluster {
  std::size_t key = 0;               // cell id (box) or center index (kmeans)
  std::vector<std::size_t> members;  // ascending subject indices
  double att = 0.0;
};

struct PreClustering {
  PreclusterMode mode = PreclusterMode::Box;
  double epsilon = 0.0;  // box mode only
  std::vector<Cluster> clusters;
  std::size_t dropped = 0;  // clusters excluded for lacking an effect
  std::vector<std::size_t> dropped_members;
};

namespace detail {

inline PreClustering finish_partition(const EffectInput& in, PreclusterMode mode,
                                      std::vector<std::vector<std::size_t>> groups) {
  PreClustering out;
  out.mode = mode;
  for (std::size_t key = 0; key < groups.size(); ++key) {
    if (groups[key].empty()) continue;
    Cluster c;
    c.key = key;
    c.members = std::move(groups[key]);
    if (in.control_diff) {
      try {
        c.att = effect_of(in, c.members);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::OneSidedCluster) throw;
        ++out.dropped;
        out.dropped_members.insert(out.dropped_members.end(), c.members.begin(), c.members.end());
        continue;
      }
    } else {
      c.att = effect_of(in, c.members);
    }
    out.clusters.push_back(std::move(c));
  }
  std::sort(out.dropped_members.begin(), out.dropped_members.end());
  return out;
}

}  // namespace detail

/// Groups eligible subjects by epsilon-net cell; empty cells are omitted and
/// clusters come out ordered by cell id.
inline PreClustering box_partition(const EffectInput& in) {
  const Dataset& data = *in.data;
  const double eps = epsilon_of(in.n(), data.d);
  std::size_t cells = 1;
  const std::size_t m = grid_size(eps);
  for (std::size_t j = 0; j < data.d; ++j) cells *= m;
  std::vector<std::vector<std::size_t>> groups(cells);
  for (std::size_t idx : in.eligible) groups[box_index(data.subjects[idx].x, eps)].push_back(idx);
  PreClustering out = detail::finish_partition(in, PreclusterMode::Box, std::move(groups));
  out.epsilon = eps;
  return out;
}

/// Box partition over all subjects that carry a counterfactual.
inline PreClustering box_partition(const Dataset& data) {
  return box_partition(make_effect_input(data, CfMode::Given));
}

struct KMeansResult {
  std::vector<std::vector<double>> centers;
  std::vector<std::size_t> label;  // per eligible position
  std::size_t iterations = 0;
};

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double diff = a[j] - b[j];
    s += diff * diff;
  }
  return s;
}

/// k-means++ seeding followed by Lloyd iterations (at most 50, stopping when
/// no center moves more than 1e-9). Ties go to the lower center index.
inline KMeansResult lloyd_kmeans(const Dataset& data, std::span<const std::size_t> points, std::size_t k,
                                 std::uint64_t seed) {
  constexpr std::size_t kMaxIter = 50;
  constexpr double kTol = 1e-9;
  const std::size_t n = points.size();
  if (k < 1 || k > n)
    throw Error(ErrorKind::OutOfRange, "K=" + std::to_string(k) + " must lie in [1, " + std::to_string(n) + "]");
  auto point = [&](std::size_t p) -> const std::vector<double>& { return data.subjects[points[p]].x; };

  CounterRng rng(seed, 0x6b6d65616e73ULL);
  KMeansResult res;
  res.centers.reserve(k);
  res.centers.push_back(point(rng.below(n)));
  std::vector<double> best(n);
  for (std::size_t p = 0; p < n; ++p) best[p] = squared_distance(point(p), res.centers[0]);
  while (res.centers.size() < k) {
    double total = 0.0;
    for (double b : best) total += b;
    std::size_t pick = n;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      for (std::size_t p = 0; p < n; ++p) {
        acc += best[p];
        if (best[p] > 0.0 && acc > target) {
          pick = p;
          break;
        }
      }
      if (pick == n)  // rounding at the tail
        for (std::size_t p = n; p-- > 0;)
          if (best[p] > 0.0) {
            pick = p;
            break;
          }
    } else {
      pick = rng.below(n);
    }
    res.centers.push_back(point(pick));
    for (std::size_t p = 0; p < n; ++p) best[p] = std::min(best[p], squared_distance(point(p), res.centers.back()));
  }

  const std::size_t d = data.d;
  res.label.assign(n, 0);
  std::vector<double> sums(k * d);
  std::vector<std::size_t> counts(k);
  for (res.iterations = 0; res.iterations < kMaxIter;) {
    for (std::size_t p = 0; p < n; ++p) {
      double bd = std::numeric_limits<double>::infinity();
      std::size_t bl = 0;
      for (std::size_t c = 0; c < k; ++c) {
        const double dist = squared_distance(point(p), res.centers[c]);
        if (dist < bd) {
          bd = dist;
          bl = c;
        }
      }
      res.label[p] = bl;
    }
    ++res.iterations;
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t p = 0; p < n; ++p) {
      const std::size_t c = res.label[p];
      ++counts[c];
      for (std::size_t j = 0; j < d; ++j) sums[c * d + j] += point(p)[j];
    }
    double moved = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;  // empty clusters keep their center
      std::vector<double> next(d);
      for (std::size_t j = 0; j < d; ++j) next[j] = sums[c * d + j] / static_cast<double>(counts[c]);
      moved = std::max(moved, std::sqrt(squared_distance(next, res.centers[c])));
      res.centers[c] = std::move(next);
    }
    if (moved <= kTol) break;
  }
  return res;
}

/// K-means pre-clustering; K = 0 selects ceil(sqrt(n)).
inline PreClustering kmeans_partition(const EffectInput& in, std::size_t k, std::uint64_t seed) {
  if (k == 0) k = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(in.n()))));
  const KMeansResult km = lloyd_kmeans(*in.data, in.eligible, k, seed);
  std::vector<std::vector<std::size_t>> groups(k);
  for (std::size_t p = 0; p < in.n(); ++p) groups[km.label[p]].push_back(in.eligible[p]);
  return detail::finish_partition(in, PreclusterMode::KMeans, std::move(groups));
}

inline PreClustering kmeans_partition(const Dataset& data, std::size_t k, std::uint64_t seed) {
  return kmeans_partition(make_effect_input(data, CfMode::Given), k, seed);
}

inline PreClustering precluster(const EffectInput& in, PreclusterMode mode, std::uint64_t seed) {
  return mode == PreclusterMode::Box ? box_partition(in) : kmeans_partition(in, 0, seed);
}

inline std::vector<double> cluster_atts(const PreClustering& pc) {
  std::vector<double> out;
  out.reserve(pc.clusters.size());
  for (const Cluster& c : pc.clusters) out.push_back(c.att);
  return out;
}

}  // namespace pcm
