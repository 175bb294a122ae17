#pragma once

// Correctly rounded floating-point summation (Shewchuk's non-overlapping
// partials, as in Python's math.fsum). The result does not depend on the
// order in which terms are added, which makes grid-accelerated averages agree
// bit for bit with a plain scan. Finite inputs only.

#include <cmath>
#include <vector>

namespace pcm {

class ExactSum {
 public:
  void add(double x) {
    std::size_t i = 0;
    for (double y : partials_) {
      if (std::abs(x) < std::abs(y)) std::swap(x, y);
      const double hi = x + y;
      const double lo = y - (hi - x);
      if (lo != 0.0) partials_[i++] = lo;
      x = hi;
    }
    partials_.resize(i);
    partials_.push_back(x);
  }

  void add(const ExactSum& other) {
    for (double p : other.partials_) add(p);
  }

  void clear() { partials_.clear(); }

  /// The exact sum rounded to nearest, ties to even.
  double value() const {
    std::size_t n = partials_.size();
    if (n == 0) return 0.0;
    double hi = partials_[--n];
    double lo = 0.0;
    while (n > 0) {
      const double x = hi;
      const double y = partials_[--n];
      hi = x + y;
      lo = y - (hi - x);
      if (lo != 0.0) break;
    }
    // half-way case: the remaining partials decide the rounding direction
    if (n > 0 && ((lo < 0.0 && partials_[n - 1] < 0.0) || (lo > 0.0 && partials_[n - 1] > 0.0))) {
      const double y = lo * 2.0;
      const double x = hi + y;
      if (y == x - hi) hi = x;
    }
    return hi;
  }

 private:
  std::vector<double> partials_;  // non-overlapping, increasing magnitude
};

}  // namespace pcm
