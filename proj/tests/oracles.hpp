#pragma once

// Slow reference implementations shared by the unit and acceptance tests.
// None of these use the library's own algorithms.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include "pcm/domain.hpp"

namespace oracle {

// Exact sum of finite doubles in a wide fixed-point integer (bit 0 = 2^-1100),
// rounded once to nearest-even. Positive and negative terms are kept apart.
class FixedPointSum {
 public:
  void add(double x) {
    if (x == 0.0) return;
    int e = 0;
    const double frac = std::frexp(std::abs(x), &e);
    auto mant = static_cast<std::uint64_t>(std::ldexp(frac, 53));
    int off = e - 53 + kBias;
    while (off < 0) {  // subnormal tail; the dropped bits are zero
      mant >>= 1;
      ++off;
    }
    auto& acc = x > 0 ? pos_ : neg_;
    const auto limb = static_cast<std::size_t>(off / 32);
    const int shift = off % 32;
    unsigned __int128 v = static_cast<unsigned __int128>(mant) << shift;
    for (std::size_t i = limb; v != 0 || i == limb; ++i) {
      v += acc[i];
      acc[i] = static_cast<std::uint32_t>(v);
      v >>= 32;
    }
  }

  double value() const {
    const bool negative = less(pos_, neg_);
    const Limbs& a = negative ? neg_ : pos_;
    const Limbs& b = negative ? pos_ : neg_;
    Limbs diff{};
    std::int64_t borrow = 0;
    for (std::size_t i = 0; i < kLimbs; ++i) {
      std::int64_t v = static_cast<std::int64_t>(a[i]) - static_cast<std::int64_t>(b[i]) - borrow;
      borrow = v < 0;
      if (v < 0) v += (std::int64_t{1} << 32);
      diff[i] = static_cast<std::uint32_t>(v);
    }
    int top = -1;
    for (int i = static_cast<int>(kLimbs) - 1; i >= 0 && top < 0; --i)
      if (diff[static_cast<std::size_t>(i)] != 0)
        top = i * 32 + (31 - __builtin_clz(diff[static_cast<std::size_t>(i)]));
    if (top < 0) return 0.0;
    auto bit = [&](int p) { return p >= 0 && ((diff[static_cast<std::size_t>(p / 32)] >> (p % 32)) & 1u); };
    const int low = std::max(0, top - 52);
    std::uint64_t mant = 0;
    for (int p = top; p >= low; --p) mant = (mant << 1) | static_cast<std::uint64_t>(bit(p));
    if (low > 0) {
      const bool guard = bit(low - 1);
      bool sticky = false;
      for (int p = low - 2; p >= 0 && !sticky; --p) sticky = bit(p);
      if (guard && (sticky || (mant & 1u))) ++mant;
    }
    const double mag = std::ldexp(static_cast<double>(mant), low - kBias);
    return negative ? -mag : mag;
  }

 private:
  static constexpr int kBias = 1100;
  static constexpr std::size_t kLimbs = 72;
  using Limbs = std::array<std::uint32_t, kLimbs>;

  static bool less(const Limbs& a, const Limbs& b) {
    for (std::size_t i = kLimbs; i-- > 0;)
      if (a[i] != b[i]) return a[i] < b[i];
    return false;
  }

  Limbs pos_{};
  Limbs neg_{};
};

inline double exact_mean(const std::vector<double>& v) {
  FixedPointSum s;
  for (double x : v) s.add(x);
  return s.value() / static_cast<double>(v.size());
}

struct Partition {
  double err = std::numeric_limits<double>::infinity();
  std::vector<double> centers;
  std::vector<std::size_t> boundaries;
};

// Exhaustive search over all contiguous k-partitions of the sorted values.
inline Partition best_contiguous_partition(std::vector<double> v, std::size_t k) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  Partition best;
  std::vector<std::size_t> cuts(k - 1);
  std::iota(cuts.begin(), cuts.end(), std::size_t{1});
  for (;;) {
    std::vector<std::size_t> edges{0};
    edges.insert(edges.end(), cuts.begin(), cuts.end());
    edges.push_back(n);
    double ss = 0.0;
    std::vector<double> centers;
    for (std::size_t g = 0; g + 1 < edges.size(); ++g) {
      double mean = 0.0;
      for (std::size_t i = edges[g]; i < edges[g + 1]; ++i) mean += v[i];
      mean /= static_cast<double>(edges[g + 1] - edges[g]);
      for (std::size_t i = edges[g]; i < edges[g + 1]; ++i) ss += (v[i] - mean) * (v[i] - mean);
      centers.push_back(mean);
    }
    const double err = ss / static_cast<double>(n);
    if (err < best.err - 1e-13 * (1.0 + err)) best = {err, centers, cuts};
    // next combination of k-1 cut positions from 1..n-1
    std::size_t j = cuts.size();
    while (j > 0 && cuts[j - 1] == n - (cuts.size() - j) - 1) --j;
    if (j == 0) break;
    ++cuts[j - 1];
    for (std::size_t t = j; t < cuts.size(); ++t) cuts[t] = cuts[t - 1] + 1;
  }
  return best;
}

// Mean effect over every eligible subject in the closed hypercube of side eps
// centred at subject i, by a full scan. Effects are ITEs, or arm-mean
// differences of outcomes when `arm_means` is set (NaN if an arm is missing).
inline double brute_smoothed(const pcm::Dataset& data, const std::vector<std::size_t>& eligible,
                             const std::vector<double>& ite, bool arm_means, std::size_t i, double eps) {
  FixedPointSum s1, s0;
  std::size_t n1 = 0, n0 = 0;
  const auto& xi = data.subjects[i].x;
  for (std::size_t j : eligible) {
    const auto& xj = data.subjects[j].x;
    bool inside = true;
    for (std::size_t a = 0; a < data.d; ++a) inside = inside && std::abs(xj[a] - xi[a]) <= eps / 2.0;
    if (!inside) continue;
    if (!arm_means) {
      s1.add(ite[j]);
      ++n1;
    } else if (data.subjects[j].t == 1) {
      s1.add(data.subjects[j].y);
      ++n1;
    } else {
      s0.add(data.subjects[j].y);
      ++n0;
    }
  }
  if (!arm_means) return s1.value() / static_cast<double>(n1);
  if (n1 == 0 || n0 == 0) return std::numeric_limits<double>::quiet_NaN();
  return s1.value() / static_cast<double>(n1) - s0.value() / static_cast<double>(n0);
}

}  // namespace oracle
