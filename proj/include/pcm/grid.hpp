#pragma once

// Uniform grid over [0,1]^d: the epsilon-net side length, the cell id of a
// point, and a bucket index used for box clustering, k-NN search and
// hypercube smoothing.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "pcm/domain.hpp"
#include "pcm/error.hpp"

namespace pcm {

namespace detail {

// base^exp, saturating at limit + 1.
inline std::size_t pow_saturating(std::size_t base, std::size_t exp, std::size_t limit) {
  std::size_t out = 1;
  for (std::size_t i = 0; i < exp; ++i) {
    if (base != 0 && out > (limit + 1) / base) return limit + 1;
    out *= base;
    if (out > limit) return limit + 1;
  }
  return out;
}

}  // namespace detail

/// floor(n^(1/(2d))), computed exactly on integers. Requires n >= 2^d.
inline std::size_t cells_per_axis(std::size_t n, std::size_t d) {
  if (d < 1) throw Error(ErrorKind::OutOfRange, "dimension must be >= 1");
  if (detail::pow_saturating(2, d, n) > n)
    throw Error(ErrorKind::SampleTooSmall,
                "n=" + std::to_string(n) + " is below 2^d for d=" + std::to_string(d));
  auto m = static_cast<std::size_t>(std::floor(std::pow(static_cast<double>(n), 1.0 / (2.0 * static_cast<double>(d)))));
  while (detail::pow_saturating(m + 1, 2 * d, n) <= n) ++m;
  while (m > 1 && detail::pow_saturating(m, 2 * d, n) > n) --m;
  return std::max<std::size_t>(m, 1);
}

/// Side length of the epsilon-net cells, 1 / floor(n^(1/(2d))).
inline double epsilon_of(std::size_t n, std::size_t d) {
  return 1.0 / static_cast<double>(cells_per_axis(n, d));
}

/// Cells per axis for a given side length.
inline std::size_t grid_size(double epsilon) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(1.0 / epsilon)));
}

inline std::size_t axis_cell(double coord, double epsilon, std::size_t m) {
  const double raw = std::floor(coord / epsilon);
  if (!(raw > 0.0)) return 0;
  return std::min(static_cast<std::size_t>(raw), m - 1);
}

/// Row-major cell id, first coordinate outermost. Coordinates equal to 1.0
/// fall in the last cell of their axis.
inline std::size_t box_index(std::span<const double> x, double epsilon) {
  const std::size_t m = grid_size(epsilon);
  std::size_t id = 0;
  for (double coord : x) id = id * m + axis_cell(coord, epsilon, m);
  return id;
}

/// Buckets of subject indices keyed by grid cell. Members inside a bucket are
/// kept in ascending subject order.
class GridIndex {
 public:
  GridIndex() = default;

  /// Indexes the listed subjects (ascending order expected) on a grid of side
  /// `epsilon`.
  GridIndex(const Dataset& data, std::span<const std::size_t> members, double epsilon)
      : d_(data.d), epsilon_(epsilon), m_(grid_size(epsilon)) {
    std::size_t cells = 1;
    for (std::size_t j = 0; j < d_; ++j) cells *= m_;
    offsets_.assign(cells + 1, 0);
    std::vector<std::size_t> cell_of(members.size());
    for (std::size_t k = 0; k < members.size(); ++k) {
      cell_of[k] = box_index(data.subjects[members[k]].x, epsilon_);
      ++offsets_[cell_of[k] + 1];
    }
    for (std::size_t c = 0; c < cells; ++c) offsets_[c + 1] += offsets_[c];
    items_.resize(members.size());
    coords_.resize(members.size() * d_);
    std::vector<std::size_t> fill(offsets_.begin(), offsets_.end() - 1);
    for (std::size_t k = 0; k < members.size(); ++k) {
      const std::size_t pos = fill[cell_of[k]]++;
      items_[pos] = members[k];
      const std::vector<double>& x = data.subjects[members[k]].x;
      std::copy(x.begin(), x.end(), coords_.begin() + static_cast<std::ptrdiff_t>(pos * d_));
    }
  }

  std::size_t dim() const noexcept { return d_; }
  double epsilon() const noexcept { return epsilon_; }
  std::size_t per_axis() const noexcept { return m_; }
  std::size_t num_cells() const noexcept { return offsets_.empty() ? 0 : offsets_.size() - 1; }

  std::span<const std::size_t> bucket(std::size_t cell) const {
    return {items_.data() + offsets_[cell], offsets_[cell + 1] - offsets_[cell]};
  }

  /// Storage positions [first, last) of a cell; see item() and coords().
  std::pair<std::size_t, std::size_t> range(std::size_t cell) const { return {offsets_[cell], offsets_[cell + 1]}; }
  std::size_t item(std::size_t pos) const { return items_[pos]; }
  const double* coords(std::size_t pos) const { return coords_.data() + pos * d_; }
  std::size_t size() const noexcept { return items_.size(); }

  /// Calls fn(cell_id) for every cell in the inclusive per-axis ranges.
  template <class Fn>
  void for_each_cell(std::span<const std::size_t> lo, std::span<const std::size_t> hi, Fn&& fn) const {
    std::vector<std::size_t> cur(lo.begin(), lo.end());
    for (;;) {
      std::size_t id = 0;
      for (std::size_t j = 0; j < d_; ++j) id = id * m_ + cur[j];
      fn(id);
      std::size_t j = d_;
      while (j > 0) {
        --j;
        if (cur[j] < hi[j]) {
          ++cur[j];
          break;
        }
        cur[j] = lo[j];
        if (j == 0) return;
      }
      if (d_ == 0) return;
    }
  }

 private:
  std::size_t d_ = 0;
  double epsilon_ = 1.0;
  std::size_t m_ = 1;
  std::vector<std::size_t> offsets_;
  std::vector<std::size_t> items_;
  std::vector<double> coords_;  // d values per item, same order as items_
};

}  // namespace pcm
