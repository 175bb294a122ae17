#pragma once

// Synthetic non-targeted trials: uniform features on [0,1]^d, levels given by
// a list of axis-aligned boxes, Gaussian potential outcomes per (arm, level).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "pcm/domain.hpp"
#include "pcm/error.hpp"
#include "pcm/rng.hpp"

namespace pcm {

struct Region {
  std::vector<double> lo;
  std::vector<double> hi;
  int level = 0;

  bool operator==(const Region&) const = default;
};

struct SynthSpec {
  std::size_t d = 2;
  std::vector<Region> regions;  // later entries overwrite earlier ones
  int default_level = 0;
  std::vector<double> mu_control;  // mu_(0,c)
  std::vector<double> mu_treated;  // mu_(1,c)
  double sigma = 5.0;
  double p_treat = 0.5;
  std::size_t n = 200000;
  std::uint64_t seed = 0;

  std::size_t num_levels() const noexcept { return mu_treated.size(); }

  /// Expected effect of each level, mu_(1,c) - mu_(0,c).
  std::vector<double> true_effects() const {
    std::vector<double> out(num_levels());
    for (std::size_t c = 0; c < out.size(); ++c) out[c] = mu_treated[c] - mu_control[c];
    return out;
  }

  bool operator==(const SynthSpec&) const = default;
};

/// Two-dimensional, three-level layout: level 0 background and two separated
/// corner squares (side 0.35) for each of levels 1 and 2. Effects 0, 1, 2.
inline SynthSpec default_spec() {
  SynthSpec spec;
  spec.d = 2;
  spec.regions = {
      {{0.00, 0.00}, {0.35, 0.35}, 1},
      {{0.65, 0.65}, {1.00, 1.00}, 1},
      {{0.00, 0.65}, {0.35, 1.00}, 2},
      {{0.65, 0.00}, {1.00, 0.35}, 2},
  };
  spec.default_level = 0;
  spec.mu_control = {0.0, 0.0, 0.0};
  spec.mu_treated = {0.0, 1.0, 2.0};
  spec.sigma = 5.0;
  spec.p_treat = 0.5;
  spec.n = 200000;
  spec.seed = 0;
  return spec;
}

inline bool region_contains(const Region& r, const std::vector<double>& x) {
  for (std::size_t j = 0; j < x.size(); ++j) {
    const bool below_hi = r.hi[j] >= 1.0 ? x[j] <= r.hi[j] : x[j] < r.hi[j];
    if (!(x[j] >= r.lo[j] && below_hi)) return false;
  }
  return true;
}

inline int level_of(const std::vector<double>& x, const SynthSpec& spec) {
  int level = spec.default_level;
  for (const Region& r : spec.regions)
    if (region_contains(r, x)) level = r.level;
  return level;
}

/// Exact measure of every level, by compressing the box faces into a grid
/// of elementary cells on which the level is constant.
inline std::vector<double> level_measures(const SynthSpec& spec) {
  std::vector<std::vector<double>> cuts(spec.d);
  for (std::size_t j = 0; j < spec.d; ++j) {
    cuts[j] = {0.0, 1.0};
    for (const Region& r : spec.regions) {
      cuts[j].push_back(std::clamp(r.lo[j], 0.0, 1.0));
      cuts[j].push_back(std::clamp(r.hi[j], 0.0, 1.0));
    }
    std::sort(cuts[j].begin(), cuts[j].end());
    cuts[j].erase(std::unique(cuts[j].begin(), cuts[j].end()), cuts[j].end());
  }
  std::vector<double> measure(spec.num_levels(), 0.0);
  std::vector<std::size_t> idx(spec.d, 0);
  std::vector<double> center(spec.d);
  for (;;) {
    double volume = 1.0;
    for (std::size_t j = 0; j < spec.d; ++j) {
      const double a = cuts[j][idx[j]], b = cuts[j][idx[j] + 1];
      volume *= b - a;
      center[j] = 0.5 * (a + b);
    }
    const int level = level_of(center, spec);
    if (level >= 0 && static_cast<std::size_t>(level) < measure.size()) measure[level] += volume;
    std::size_t j = 0;
    for (; j < spec.d; ++j) {
      if (++idx[j] + 1 < cuts[j].size()) break;
      idx[j] = 0;
    }
    if (j == spec.d) break;
  }
  return measure;
}

inline void validate_spec(const SynthSpec& spec) {
  auto fail = [](const std::string& msg) { throw Error(ErrorKind::InvalidSpec, msg); };
  if (spec.d < 1) fail("d must be >= 1");
  if (spec.n < 1) fail("n must be >= 1");
  const std::size_t ell = spec.num_levels();
  if (ell < 1) fail("at least one level is required");
  if (spec.mu_control.size() != ell) fail("mu tables for the two arms differ in length");
  for (std::size_t c = 0; c < ell; ++c)
    if (!std::isfinite(spec.mu_control[c]) || !std::isfinite(spec.mu_treated[c])) fail("mu must be finite");
  if (!(spec.sigma >= 0.0) || !std::isfinite(spec.sigma)) fail("sigma must be finite and >= 0");
  if (!(spec.p_treat > 0.0 && spec.p_treat < 1.0)) fail("p_treat must lie in (0,1)");
  auto check_level = [&](int level) {
    if (level < 0 || static_cast<std::size_t>(level) >= ell)
      fail("level " + std::to_string(level) + " outside [0," + std::to_string(ell) + ")");
  };
  check_level(spec.default_level);
  for (std::size_t r = 0; r < spec.regions.size(); ++r) {
    const Region& reg = spec.regions[r];
    if (reg.lo.size() != spec.d || reg.hi.size() != spec.d)
      fail("region " + std::to_string(r) + " has wrong dimension");
    for (std::size_t j = 0; j < spec.d; ++j)
      if (!(0.0 <= reg.lo[j] && reg.lo[j] < reg.hi[j] && reg.hi[j] <= 1.0))
        fail("region " + std::to_string(r) + " must satisfy 0 <= lo < hi <= 1 on every axis");
    check_level(reg.level);
  }
  const std::vector<double> measure = level_measures(spec);
  for (std::size_t c = 0; c < ell; ++c)
    if (!(measure[c] > 0.0)) fail("level " + std::to_string(c) + " has zero measure");
  const std::vector<double> effects = spec.true_effects();
  for (std::size_t a = 0; a < ell; ++a)
    for (std::size_t b = a + 1; b < ell; ++b)
      if (!(std::abs(effects[a] - effects[b]) > 0.0))
        fail("levels " + std::to_string(a) + " and " + std::to_string(b) + " share the same effect");
}

/// Smallest pairwise gap between level effects (infinity for one level).
inline double effect_separation(const SynthSpec& spec) {
  const std::vector<double> effects = spec.true_effects();
  double kappa = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < effects.size(); ++a)
    for (std::size_t b = a + 1; b < effects.size(); ++b) kappa = std::min(kappa, std::abs(effects[a] - effects[b]));
  return kappa;
}

/// Draws subject i from its own stream (seed, i); output is independent of
/// generation order.
inline Subject generate_subject(const SynthSpec& spec, std::size_t i) {
  CounterRng rng(spec.seed, i);
  Subject s;
  s.x.resize(spec.d);
  for (double& coord : s.x) coord = rng.uniform();
  s.t = rng.uniform() < spec.p_treat ? 1 : 0;
  const int c = level_of(s.x, spec);
  const double v = spec.mu_treated[c] + spec.sigma * rng.normal();
  const double vbar = spec.mu_control[c] + spec.sigma * rng.normal();
  s.y = s.t == 1 ? v : vbar;
  s.ybar = s.t == 1 ? vbar : v;
  s.c_true = c;
  return s;
}

inline Dataset generate(const SynthSpec& spec) {
  validate_spec(spec);
  Dataset data;
  data.d = spec.d;
  data.subjects.reserve(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) data.subjects.push_back(generate_subject(spec, i));
  return data;
}

}  // namespace pcm
