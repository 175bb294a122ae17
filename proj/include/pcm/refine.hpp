#pragma once

// Hypercube smoothing of individual effects and the E-M style reassignment
// of subjects to the nearest level effect.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "pcm/domain.hpp"
#include "pcm/exact_sum.hpp"
#include "pcm/grid.hpp"
#include "pcm/merge1d.hpp"
#include "pcm/precluster.hpp"

namespace pcm {

class SmoothingIndex {
 public:
  explicit SmoothingIndex(const EffectInput& in)
      : in_(&in),
        eps_(epsilon_of(in.n(), in.data->d)),
        grid_(*in.data, in.eligible, eps_ / static_cast<double>(refinement(in.n(), in.data->d))) {
    const std::size_t cells = grid_.num_cells();
    const std::size_t total = grid_.size();
    value_.resize(total);
    treated_.resize(total);
    cell_.assign(cells, Tally{});
    for (std::size_t c = 0; c < cells; ++c) {
      const auto [first, last] = grid_.range(c);
      for (std::size_t pos = first; pos < last; ++pos) {
        const Subject& s = in.data->subjects[grid_.item(pos)];
        value_[pos] = in.control_diff ? s.y : in.ite[grid_.item(pos)];
        treated_[pos] = !in.control_diff || s.t == 1;
        cell_[c].add(value_[pos], treated_[pos]);
      }
    }
  }

  /// Side length of the smoothing hypercube.
  double epsilon() const noexcept { return eps_; }

  /// Eligible subjects within the closed hypercube of side epsilon centred at
  /// x, in ascending index order.
  std::vector<std::size_t> neighborhood(std::span<const double> x) const {
    std::vector<std::size_t> out;
    scan(x, [&](std::size_t pos) { out.push_back(grid_.item(pos)); }, [&](std::size_t c) {
      const auto [first, last] = grid_.range(c);
      for (std::size_t pos = first; pos < last; ++pos) out.push_back(grid_.item(pos));
    });
    std::sort(out.begin(), out.end());
    return out;
  }

  /// Mean effect over the centred hypercube at x, from correctly rounded
  /// sums (so independent of visiting order). NaN only in
  /// control-difference mode when the neighbourhood lacks an arm.
  double smoothed_at(std::span<const double> x) const {
    Tally t;
    return smoothed_at(x, t);
  }

  double smoothed_ite(std::size_t i) const { return smoothed_at(in_->data->subjects[i].x); }

  /// Smoothed effect for every eligible subject, NaN elsewhere.
  std::vector<double> smooth_all() const {
    std::vector<double> out(in_->data->n(), std::numeric_limits<double>::quiet_NaN());
    Tally scratch;
    for (std::size_t i : in_->eligible) out[i] = smoothed_at(in_->data->subjects[i].x, scratch);
    return out;
  }

 private:
  // Index cells refine the smoothing side up to 4-fold per axis, so most of a
  // hypercube is covered by whole cells whose totals are precomputed. The
  // refinement shrinks in high dimension to keep the cell count near n.
  static std::size_t refinement(std::size_t n, std::size_t d) {
    const std::size_t m = cells_per_axis(n, d);
    const std::size_t budget = 4 * n + 1024;
    std::size_t sub = 4;
    while (sub > 1 && detail::pow_saturating(sub * m, d, budget) > budget) --sub;
    return sub;
  }
  static constexpr std::size_t kMaxStackDim = 16;
  static constexpr double kMargin = 1e-9;

  // Arm-wise sums; outside control-difference mode every item counts as arm 1.
  struct Tally {
    ExactSum sum1, sum0;
    std::size_t n1 = 0, n0 = 0;
    void add(double v, bool arm1) {
      if (arm1) {
        sum1.add(v);
        ++n1;
      } else {
        sum0.add(v);
        ++n0;
      }
    }
    void clear() {
      sum1.clear();
      sum0.clear();
      n1 = n0 = 0;
    }
    void merge(const Tally& o) {
      sum1.add(o.sum1);
      sum0.add(o.sum0);
      n1 += o.n1;
      n0 += o.n0;
    }
  };

  double smoothed_at(std::span<const double> x, Tally& t) const {
    t.clear();
    scan(x, [&](std::size_t pos) { t.add(value_[pos], treated_[pos]); }, [&](std::size_t c) { t.merge(cell_[c]); });
    if (in_->control_diff) {
      if (t.n1 == 0 || t.n0 == 0) return std::numeric_limits<double>::quiet_NaN();
      return t.sum1.value() / static_cast<double>(t.n1) - t.sum0.value() / static_cast<double>(t.n0);
    }
    return t.sum1.value() / static_cast<double>(t.n1);
  }

  // Visits the hypercube |p - x| <= eps/2: point(pos) for items of boundary
  // cells that pass the exact test, whole(cell) for cells entirely inside.
  template <class PointFn, class CellFn>
  void scan(std::span<const double> x, PointFn&& point, CellFn&& whole) const {
    const std::size_t d = grid_.dim();
    const std::size_t m = grid_.per_axis();
    const double h = grid_.epsilon();
    const double half = eps_ / 2.0;
    std::size_t lo_s[kMaxStackDim], hi_s[kMaxStackDim];
    std::vector<std::size_t> lo_v, hi_v;
    std::span<std::size_t> lo(lo_s, d <= kMaxStackDim ? d : 0), hi(hi_s, d <= kMaxStackDim ? d : 0);
    if (d > kMaxStackDim) {
      lo_v.resize(d);
      hi_v.resize(d);
      lo = lo_v;
      hi = hi_v;
    }
    for (std::size_t j = 0; j < d; ++j) {
      // small margin so rounding in the cell lookup never hides a member
      lo[j] = axis_cell((x[j] - half) - kMargin, h, m);
      hi[j] = axis_cell((x[j] + half) + kMargin, h, m);
    }
    // per-axis range of cells whose whole extent lies inside the hypercube
    std::vector<std::size_t> cur(lo.begin(), lo.end());
    auto interior = [&](std::size_t j, std::size_t c) {
      const double a = static_cast<double>(c) * h, b = static_cast<double>(c + 1) * h;
      return a >= x[j] - half + kMargin && b <= x[j] + half - kMargin;
    };
    grid_.for_each_cell(lo, hi, [&](std::size_t cell) {
      // recover the per-axis coordinates of this cell
      std::size_t rem = cell;
      bool inside_all = true;
      for (std::size_t j = d; j-- > 0;) {
        cur[j] = rem % m;
        rem /= m;
        inside_all = inside_all && interior(j, cur[j]);
      }
      if (inside_all) {
        whole(cell);
        return;
      }
      const auto [first, last] = grid_.range(cell);
      for (std::size_t pos = first; pos < last; ++pos) {
        const double* p = grid_.coords(pos);
        bool inside = true;
        for (std::size_t j = 0; j < d && inside; ++j) inside = std::abs(p[j] - x[j]) <= half;
        if (inside) point(pos);
      }
    });
  }

  const EffectInput* in_;
  double eps_;
  GridIndex grid_;
  std::vector<double> value_;   // ITE, or the outcome in control-difference mode
  std::vector<char> treated_;
  std::vector<Tally> cell_;
};

/// Index of the level effect nearest to value; ties go to the lower index.
inline int nearest_level(double value, const std::vector<double>& mu) {
  int best = 0;
  double bd = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < mu.size(); ++c) {
    const double dist = std::abs(value - mu[c]);
    if (dist < bd) {
      bd = dist;
      best = static_cast<int>(c);
    }
  }
  return best;
}

/// One E-M update: every eligible subject moves to the level whose effect is
/// nearest its smoothed effect, then level effects are recomputed from raw
/// effects. Subjects with an undefined smoothed value keep their level.
inline LevelModel reassign_levels(const EffectInput& in, const LevelModel& model, const std::vector<double>& smoothed) {
  detail::LevelSet set;
  set.members.resize(model.ell_hat);
  set.mu.assign(model.ell_hat, 0.0);
  for (std::size_t i : in.eligible) {
    int level = model.assignment[i];
    if (!std::isnan(smoothed[i])) level = nearest_level(smoothed[i], model.mu_hat);
    if (level >= 0) set.members[static_cast<std::size_t>(level)].push_back(i);
  }
  LevelModel out = model;
  out.empty_levels_removed = model.empty_levels_removed;
  out.smoothed_ite = smoothed;
  detail::finalize_levels(in, std::move(set), out);
  return out;
}

inline LevelModel reassign_levels(const EffectInput& in, const LevelModel& model, const SmoothingIndex& index) {
  return reassign_levels(in, model, index.smooth_all());
}

/// Applies reassign_levels `iters` times; smoothed effects are computed once.
inline LevelModel run_em(const EffectInput& in, const LevelModel& model, const std::vector<double>& smoothed,
                         std::size_t iters) {
  LevelModel cur = model;
  for (std::size_t it = 0; it < iters; ++it) cur = reassign_levels(in, cur, smoothed);
  return cur;
}

inline LevelModel run_em(const EffectInput& in, const LevelModel& model, const SmoothingIndex& index,
                         std::size_t iters) {
  if (iters == 0) return model;
  return run_em(in, model, index.smooth_all(), iters);
}

}  // namespace pcm
