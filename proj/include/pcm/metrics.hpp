#pragma once

// Evaluation against known levels: absolute error of per-subject effects,
// confusion matrices, cluster homogeneity and the Bayes raw-ITE baseline.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "pcm/domain.hpp"
#include "pcm/error.hpp"
#include "pcm/precluster.hpp"

namespace pcm {

using Matrix = std::vector<std::vector<double>>;

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
};

namespace detail {

inline int label_of(const Subject& s, std::size_t index) {
  if (!s.c_true) throw Error(ErrorKind::MissingLabels, "subject " + std::to_string(index) + " has no true level");
  return *s.c_true;
}

inline MeanStd mean_std(std::span<const double> errors) {
  if (errors.empty()) throw Error(ErrorKind::SampleTooSmall, "no subjects to evaluate");
  double sum = 0.0;
  for (double e : errors) sum += e;
  const double mean = sum / static_cast<double>(errors.size());
  double ss = 0.0;
  for (double e : errors) ss += (e - mean) * (e - mean);
  return {mean, std::sqrt(ss / static_cast<double>(errors.size()))};
}

inline double true_effect(const std::vector<double>& true_mu, int c, std::size_t index) {
  if (c < 0 || static_cast<std::size_t>(c) >= true_mu.size())
    throw Error(ErrorKind::OutOfRange, "true level " + std::to_string(c) + " of subject " + std::to_string(index) +
                                           " has no effect in true_mu");
  return true_mu[static_cast<std::size_t>(c)];
}

}  // namespace detail

/// Mean and std of |true_mu[c_true] - mu_hat[assigned]| over assigned subjects.
inline MeanStd mae(const LevelModel& model, const Dataset& data, const std::vector<double>& true_mu) {
  std::vector<double> errors;
  errors.reserve(data.n());
  for (std::size_t i = 0; i < data.n(); ++i) {
    const int a = model.assignment[i];
    if (a < 0) continue;
    const double truth = detail::true_effect(true_mu, detail::label_of(data.subjects[i], i), i);
    errors.push_back(std::abs(truth - model.mu_hat[static_cast<std::size_t>(a)]));
  }
  return detail::mean_std(errors);
}

/// Error when each subject's raw ITE is used as its predicted effect.
inline MeanStd raw_ite_mae(std::span<const double> ite, std::span<const std::size_t> subjects, const Dataset& data,
                           const std::vector<double>& true_mu) {
  std::vector<double> errors;
  errors.reserve(subjects.size());
  for (std::size_t i : subjects) {
    const double truth = detail::true_effect(true_mu, detail::label_of(data.subjects[i], i), i);
    errors.push_back(std::abs(truth - ite[i]));
  }
  return detail::mean_std(errors);
}

/// True levels ordered by ascending effect (ties by level index).
inline std::vector<std::size_t> levels_by_effect(const std::vector<double>& true_mu) {
  std::vector<std::size_t> order(true_mu.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return true_mu[a] < true_mu[b]; });
  return order;
}

/// Row-normalised confusion: row r is the r-th true level by ascending effect,
/// column b the fitted level b. Rectangular when the level counts differ;
/// rows of levels with no assigned subjects are all zero.
inline Matrix confusion(const LevelModel& model, const Dataset& data, const std::vector<double>& true_mu) {
  const std::vector<std::size_t> order = levels_by_effect(true_mu);
  std::vector<std::size_t> row_of(true_mu.size());
  for (std::size_t r = 0; r < order.size(); ++r) row_of[order[r]] = r;
  Matrix counts(true_mu.size(), std::vector<double>(model.ell_hat, 0.0));
  for (std::size_t i = 0; i < data.n(); ++i) {
    const int a = model.assignment[i];
    if (a < 0) continue;
    const int c = detail::label_of(data.subjects[i], i);
    detail::true_effect(true_mu, c, i);
    counts[row_of[static_cast<std::size_t>(c)]][static_cast<std::size_t>(a)] += 1.0;
  }
  for (auto& row : counts) {
    double total = 0.0;
    for (double v : row) total += v;
    if (total > 0.0)
      for (double& v : row) v /= total;
  }
  return counts;
}

/// Unweighted mean over clusters of the majority true level's share.
inline double homogeneity(const PreClustering& pc, const Dataset& data) {
  if (pc.clusters.empty()) throw Error(ErrorKind::SampleTooSmall, "no clusters");
  double total = 0.0;
  for (const Cluster& c : pc.clusters) {
    std::map<int, std::size_t> tally;
    for (std::size_t idx : c.members) ++tally[detail::label_of(data.subjects[idx], idx)];
    std::size_t majority = 0;
    for (const auto& [level, count] : tally) majority = std::max(majority, count);
    total += static_cast<double>(majority) / static_cast<double>(c.members.size());
  }
  return total / static_cast<double>(pc.clusters.size());
}

/// Classifies raw ITEs with thresholds at the midpoints of the ascending true
/// effects (a value on a threshold goes to the lower level). The returned
/// model reports the true effects as its level effects.
inline LevelModel bayes_baseline(std::span<const double> ite, std::span<const std::size_t> subjects, std::size_t n,
                                 std::vector<double> true_mu) {
  std::sort(true_mu.begin(), true_mu.end());
  LevelModel model;
  model.ell_hat = true_mu.size();
  model.mu_hat = true_mu;
  model.assignment.assign(n, -1);
  for (std::size_t i : subjects) {
    int level = 0;
    while (static_cast<std::size_t>(level) + 1 < true_mu.size() &&
           ite[i] > 0.5 * (true_mu[static_cast<std::size_t>(level)] + true_mu[static_cast<std::size_t>(level) + 1]))
      ++level;
    model.assignment[i] = level;
  }
  return model;
}

/// Mean raw ITE over each level of a model (NaN for an empty level).
inline std::vector<double> level_mean_ite(const LevelModel& model, std::span<const double> ite) {
  std::vector<double> sum(model.ell_hat, 0.0), count(model.ell_hat, 0.0);
  for (std::size_t i = 0; i < model.assignment.size(); ++i) {
    const int a = model.assignment[i];
    if (a < 0) continue;
    sum[static_cast<std::size_t>(a)] += ite[i];
    count[static_cast<std::size_t>(a)] += 1.0;
  }
  for (std::size_t c = 0; c < sum.size(); ++c)
    sum[c] = count[c] > 0.0 ? sum[c] / count[c] : std::numeric_limits<double>::quiet_NaN();
  return sum;
}

struct BayesBlock {
  MeanStd raw_ite_mae;
  MeanStd subpopulation_mae;  // effects = mean raw ITE of each Bayes group
  std::vector<double> group_means;
  Matrix confusion;
};

struct EvalReport {
  MeanStd mae;
  Matrix confusion;
  std::vector<double> mu_hat;
  std::vector<double> true_mu;  // ascending
  std::optional<double> homogeneity;
  std::size_t ell_hat = 0;
  std::size_t ell_true = 0;
  bool level_count_mismatch = false;
  std::optional<BayesBlock> bayes;
};

inline BayesBlock evaluate_bayes(std::span<const double> ite, std::span<const std::size_t> subjects,
                                 const Dataset& data, const std::vector<double>& true_mu) {
  BayesBlock b;
  LevelModel model = bayes_baseline(ite, subjects, data.n(), true_mu);
  b.raw_ite_mae = raw_ite_mae(ite, subjects, data, true_mu);
  b.confusion = confusion(model, data, true_mu);
  b.group_means = level_mean_ite(model, ite);
  LevelModel grouped = model;
  grouped.mu_hat = b.group_means;
  b.subpopulation_mae = mae(grouped, data, true_mu);
  return b;
}

inline EvalReport evaluate(const LevelModel& model, const Dataset& data, const std::vector<double>& true_mu,
                           const PreClustering* pc = nullptr) {
  EvalReport r;
  r.mae = mae(model, data, true_mu);
  r.confusion = confusion(model, data, true_mu);
  r.mu_hat = model.mu_hat;
  r.true_mu = true_mu;
  std::sort(r.true_mu.begin(), r.true_mu.end());
  if (pc) r.homogeneity = homogeneity(*pc, data);
  r.ell_hat = model.ell_hat;
  r.ell_true = true_mu.size();
  r.level_count_mismatch = r.ell_hat != r.ell_true;
  return r;
}

}  // namespace pcm
