#pragma once

// Core data types shared across the library: subjects, datasets, the fitted
// level model and the fitting configuration.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pcm/error.hpp"

namespace pcm {

struct Subject {
  std::vector<double> x;        // coordinates in [0,1]^d
  int t = 0;                    // 1 treated, 0 control
  double y = 0.0;               // observed outcome
  std::optional<double> ybar;   // counterfactual outcome
  std::optional<int> c_true;    // true level, evaluation only

  bool operator==(const Subject&) const = default;
};

struct Dataset {
  std::size_t d = 0;
  std::vector<Subject> subjects;

  std::size_t n() const noexcept { return subjects.size(); }
  bool operator==(const Dataset&) const = default;
};

/// Individual treatment effect, always treated minus untreated.
inline double compute_ite(double y, double ybar, int t) {
  return (y - ybar) * static_cast<double>(2 * t - 1);
}

inline double compute_ite(const Subject& s) {
  if (!s.ybar) throw Error(ErrorKind::MissingCounterfactual, "subject has no counterfactual outcome");
  return compute_ite(s.y, *s.ybar, s.t);
}

struct DatasetIssue {
  enum class Kind { Empty, DimensionMismatch, CoordinateOutOfRange, NonFiniteOutcome, BadTreatment };
  Kind kind;
  std::size_t index = 0;  // subject index; unused for Empty
  std::string detail;
};

inline const char* to_string(DatasetIssue::Kind kind) {
  switch (kind) {
    case DatasetIssue::Kind::Empty: return "empty";
    case DatasetIssue::Kind::DimensionMismatch: return "dimension-mismatch";
    case DatasetIssue::Kind::CoordinateOutOfRange: return "coordinate-out-of-range";
    case DatasetIssue::Kind::NonFiniteOutcome: return "non-finite-outcome";
    case DatasetIssue::Kind::BadTreatment: return "bad-treatment";
  }
  return "unknown";
}

struct ValidationReport {
  std::vector<DatasetIssue> issues;
  double frac_with_counterfactual = 0.0;
  double frac_treated = 0.0;

  bool clean() const noexcept { return issues.empty(); }
};

inline ValidationReport validate_dataset(const Dataset& data) {
  ValidationReport report;
  if (data.n() == 0) {
    report.issues.push_back({DatasetIssue::Kind::Empty, 0, "n=0"});
    return report;
  }
  std::size_t with_cf = 0, treated = 0;
  for (std::size_t i = 0; i < data.n(); ++i) {
    const Subject& s = data.subjects[i];
    if (s.x.size() != data.d || data.d == 0) {
      report.issues.push_back({DatasetIssue::Kind::DimensionMismatch, i,
                               "expected " + std::to_string(data.d) + " coordinates, got " +
                                   std::to_string(s.x.size())});
    }
    for (std::size_t j = 0; j < s.x.size(); ++j) {
      if (!(s.x[j] >= 0.0 && s.x[j] <= 1.0)) {
        report.issues.push_back({DatasetIssue::Kind::CoordinateOutOfRange, i,
                                 "x" + std::to_string(j + 1) + "=" + std::to_string(s.x[j])});
      }
    }
    if (!std::isfinite(s.y) || (s.ybar && !std::isfinite(*s.ybar))) {
      report.issues.push_back({DatasetIssue::Kind::NonFiniteOutcome, i, "outcome is NaN or infinite"});
    }
    if (s.t != 0 && s.t != 1) {
      report.issues.push_back({DatasetIssue::Kind::BadTreatment, i, "t=" + std::to_string(s.t)});
    }
    with_cf += s.ybar.has_value();
    treated += (s.t == 1);
  }
  report.frac_with_counterfactual = static_cast<double>(with_cf) / static_cast<double>(data.n());
  report.frac_treated = static_cast<double>(treated) / static_cast<double>(data.n());
  return report;
}

inline void require_clean(const Dataset& data) {
  const ValidationReport report = validate_dataset(data);
  if (!report.clean()) {
    const DatasetIssue& first = report.issues.front();
    throw Error(ErrorKind::InvalidDataset, std::string(to_string(first.kind)) + " at subject " +
                                               std::to_string(first.index) + " (" + first.detail +
                                               "); " + std::to_string(report.issues.size()) + " issue(s)");
  }
}

/// Result of a fit. Per-subject vectors are index-aligned with the input
/// dataset; subjects that did not take part carry level -1 and NaN.
struct LevelModel {
  std::size_t ell_hat = 0;
  std::vector<double> mu_hat;              // strictly ascending
  std::vector<int> assignment;             // level index or -1
  std::vector<std::pair<std::size_t, double>> err_curve;
  double threshold_used = 0.0;
  bool did_not_converge = false;
  std::size_t empty_levels_removed = 0;
  std::vector<double> smoothed_ite;        // filled by the refinement step

  bool operator==(const LevelModel&) const = default;
};

enum class PreclusterMode { Box, KMeans };
enum class CfMode { Given, Knn, ControlDiff };

inline const char* to_string(PreclusterMode m) { return m == PreclusterMode::Box ? "box" : "kmeans"; }

inline const char* to_string(CfMode m) {
  switch (m) {
    case CfMode::Given: return "given";
    case CfMode::Knn: return "knn";
    case CfMode::ControlDiff: return "control_diff";
  }
  return "unknown";
}

struct PcmConfig {
  PreclusterMode precluster_mode = PreclusterMode::Box;
  CfMode cf_mode = CfMode::Given;
  std::size_t knn_k = 0;            // 0 selects ceil(sqrt(#controls))
  std::size_t em_iters = 1;
  double tau_multiplier = 1.0;
  std::size_t k_max = 10;
  std::uint64_t seed = 0;
  std::size_t fixed_levels = 0;     // >0 bypasses threshold selection

  void validate() const {
    if (!(tau_multiplier > 0.0) || !std::isfinite(tau_multiplier))
      throw Error(ErrorKind::OutOfRange, "tau_multiplier must be a positive real");
    if (k_max < 1) throw Error(ErrorKind::OutOfRange, "k_max must be >= 1");
  }
};

}  // namespace pcm
