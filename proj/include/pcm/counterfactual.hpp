#pragma once

// Counterfactual supply: pass-through of given counterfactuals, a k-NN
// regressor fitted on controls, and the cluster-level control difference
// used when no estimator is available.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "pcm/domain.hpp"
#include "pcm/error.hpp"
#include "pcm/grid.hpp"

namespace pcm {

/// Exact k-nearest-neighbour mean regressor over control subjects. Distance
/// ties are broken by lower subject index.
class KnnRegressor {
 public:
  /// k == 0 selects ceil(sqrt(#controls)).
  KnnRegressor(const Dataset& data, std::vector<std::size_t> controls, std::size_t k)
      : data_(&data), controls_(std::move(controls)) {
    std::sort(controls_.begin(), controls_.end());
    if (k == 0) k = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(controls_.size()))));
    k_ = k;
    if (k_ < 1 || controls_.size() < k_)
      throw Error(ErrorKind::InsufficientControls, std::to_string(controls_.size()) + " control(s) for k=" +
                                                       std::to_string(k_));
    if (data.d <= kMaxGridDim) {
      const double per_cell = static_cast<double>(controls_.size()) / static_cast<double>(k_);
      auto m = static_cast<std::size_t>(std::floor(std::pow(per_cell, 1.0 / static_cast<double>(data.d))));
      m = std::clamp<std::size_t>(m, 1, 1024);
      grid_ = GridIndex(data, controls_, 1.0 / static_cast<double>(m));
    }
  }

  std::size_t k() const noexcept { return k_; }

  /// Indices of the k nearest controls, ordered by (distance, index).
  std::vector<std::size_t> neighbors(std::span<const double> x) const {
    std::vector<Candidate> cand;
    if (data_->d > kMaxGridDim) {
      cand.reserve(controls_.size());
      for (std::size_t idx : controls_) cand.push_back({dist2(x, idx), idx});
    } else {
      grid_search(x, cand);
    }
    const auto k = static_cast<std::ptrdiff_t>(k_);
    std::nth_element(cand.begin(), cand.begin() + (k - 1), cand.end());
    cand.resize(k_);
    std::sort(cand.begin(), cand.end());
    std::vector<std::size_t> out(k_);
    for (std::size_t i = 0; i < k_; ++i) out[i] = cand[i].index;
    return out;
  }

  double predict(std::span<const double> x) const {
    double sum = 0.0;
    for (std::size_t idx : neighbors(x)) sum += data_->subjects[idx].y;
    return sum / static_cast<double>(k_);
  }

 private:
  static constexpr std::size_t kMaxGridDim = 4;

  struct Candidate {
    double dist2;
    std::size_t index;
    bool operator<(const Candidate& o) const noexcept {
      return dist2 < o.dist2 || (dist2 == o.dist2 && index < o.index);
    }
  };

  double dist2(std::span<const double> x, std::size_t idx) const {
    const std::vector<double>& p = data_->subjects[idx].x;
    double s = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double diff = x[j] - p[j];
      s += diff * diff;
    }
    return s;
  }

  // Expands Chebyshev rings of cells around the query cell until the k-th
  // candidate is strictly closer than any unscanned cell.
  void grid_search(std::span<const double> x, std::vector<Candidate>& cand) const {
    const std::size_t d = data_->d;
    const std::size_t m = grid_.per_axis();
    const double eps = grid_.epsilon();
    std::vector<std::size_t> q(d), lo(d), hi(d);
    for (std::size_t j = 0; j < d; ++j) q[j] = axis_cell(x[j], eps, m);
    for (std::size_t r = 0;; ++r) {
      bool covers_all = true;
      for (std::size_t j = 0; j < d; ++j) {
        lo[j] = q[j] >= r ? q[j] - r : 0;
        hi[j] = std::min(q[j] + r, m - 1);
        covers_all = covers_all && lo[j] == 0 && hi[j] == m - 1;
      }
      grid_.for_each_cell(lo, hi, [&](std::size_t cell) {
        // skip cells already scanned in an inner ring
        if (r > 0) {
          std::size_t rem = cell, cheb = 0;
          for (std::size_t j = d; j-- > 0;) {
            const std::size_t cj = rem % m;
            rem /= m;
            cheb = std::max(cheb, cj > q[j] ? cj - q[j] : q[j] - cj);
          }
          if (cheb < r) return;
        }
        for (std::size_t idx : grid_.bucket(cell)) cand.push_back({dist2(x, idx), idx});
      });
      if (covers_all) return;
      if (cand.size() < k_) continue;
      double bound = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < d; ++j) {
        if (lo[j] > 0) bound = std::min(bound, x[j] - static_cast<double>(lo[j]) * eps);
        if (hi[j] + 1 < m) bound = std::min(bound, static_cast<double>(hi[j] + 1) * eps - x[j]);
      }
      bound = std::max(bound, 0.0);
      const auto k = static_cast<std::ptrdiff_t>(k_);
      std::nth_element(cand.begin(), cand.begin() + (k - 1), cand.end());
      if (cand[k_ - 1].dist2 < bound * bound) return;
    }
  }

  const Dataset* data_;
  std::vector<std::size_t> controls_;
  std::size_t k_ = 1;
  GridIndex grid_;
};

inline std::vector<std::size_t> indices_where(const Dataset& data, auto&& pred) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < data.n(); ++i)
    if (pred(data.subjects[i])) out.push_back(i);
  return out;
}

inline KnnRegressor fit_knn(const Dataset& data, std::size_t k) {
  return KnnRegressor(data, indices_where(data, [](const Subject& s) { return s.t == 0; }), k);
}

/// Subjects that enter the fitting steps under a counterfactual mode.
inline std::vector<std::size_t> eligible_subjects(const Dataset& data, CfMode mode) {
  switch (mode) {
    case CfMode::Given: return indices_where(data, [](const Subject& s) { return s.ybar.has_value(); });
    case CfMode::Knn: return indices_where(data, [](const Subject& s) { return s.t == 1; });
    case CfMode::ControlDiff: break;
  }
  return indices_where(data, [](const Subject&) { return true; });
}

/// Returns a dataset whose eligible subjects carry usable counterfactuals.
/// In knn mode every treated subject's ybar is replaced by the estimate.
inline Dataset attach_counterfactuals(const Dataset& data, CfMode mode, std::size_t knn_k = 0) {
  switch (mode) {
    case CfMode::Given:
      for (std::size_t i = 0; i < data.n(); ++i)
        if (data.subjects[i].t == 1 && !data.subjects[i].ybar)
          throw Error(ErrorKind::MissingCounterfactual,
                      "treated subject " + std::to_string(i) + " has no counterfactual");
      return data;
    case CfMode::Knn: {
      const KnnRegressor knn = fit_knn(data, knn_k);
      Dataset out = data;
      for (Subject& s : out.subjects)
        if (s.t == 1) s.ybar = knn.predict(s.x);
      return out;
    }
    case CfMode::ControlDiff:
      return data;
  }
  return data;
}

/// Mean treated outcome minus mean control outcome over the members.
inline double control_diff_att(const Dataset& data, std::span<const std::size_t> members) {
  double sum1 = 0.0, sum0 = 0.0;
  std::size_t n1 = 0, n0 = 0;
  for (std::size_t idx : members) {
    const Subject& s = data.subjects[idx];
    if (s.t == 1) {
      sum1 += s.y;
      ++n1;
    } else {
      sum0 += s.y;
      ++n0;
    }
  }
  if (n1 == 0 || n0 == 0)
    throw Error(ErrorKind::OneSidedCluster, "cluster has " + std::to_string(n1) + " treated and " +
                                                std::to_string(n0) + " control subject(s)");
  return sum1 / static_cast<double>(n1) - sum0 / static_cast<double>(n0);
}

}  // namespace pcm
