#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "pcm/counterfactual.hpp"
#include "pcm/domain.hpp"
#include "pcm/merge1d.hpp"
#include "pcm/precluster.hpp"
#include "pcm/refine.hpp"
#include "pcm/rng.hpp"

namespace pcm {

struct StageTiming {
  std::string stage;
  double ms = 0.0;
};

struct Diagnostics {
  std::size_t n_subjects = 0;
  std::size_t n_eligible = 0;
  std::size_t num_clusters = 0;
  std::size_t dropped_clusters = 0;
  double epsilon = 0.0;
  double tau = 0.0;
  bool did_not_converge = false;
  std::size_t knn_k = 0;
  std::vector<StageTiming> timings;  // wall clock, not reproducible
};

struct PcmResult {
  LevelModel model;
  PreClustering preclustering;
  std::vector<double> ite;            // raw per-subject effects (NaN if undefined)
  std::vector<std::size_t> eligible;
  Diagnostics diagnostics;
};

/// Fits the pre-cluster-and-merge model: counterfactuals, pre-clustering,
/// level selection, merge, and `em_iters` refinement passes.
inline PcmResult run_pcm(const Dataset& data, const PcmConfig& config) {
  using clock = std::chrono::steady_clock;
  require_clean(data);
  config.validate();

  PcmResult res;
  auto t0 = clock::now();
  auto lap = [&](const char* stage) {
    const auto now = clock::now();
    res.diagnostics.timings.push_back({stage, std::chrono::duration<double, std::milli>(now - t0).count()});
    t0 = now;
  };

  const Dataset prepared = attach_counterfactuals(data, config.cf_mode, config.knn_k);
  const EffectInput in = make_effect_input(prepared, config.cf_mode);
  if (config.cf_mode == CfMode::Knn) {
    const auto controls = static_cast<double>(data.n() - in.n());
    res.diagnostics.knn_k =
        config.knn_k > 0 ? config.knn_k : static_cast<std::size_t>(std::ceil(std::sqrt(controls)));
  }
  lap("counterfactual");

  res.preclustering = precluster(in, config.precluster_mode, derive_seed(config.seed, 0x7072656eULL));
  lap("precluster");

  const std::vector<double> atts = cluster_atts(res.preclustering);
  const LevelSelection sel =
      select_num_levels(atts, in.n(), data.d, config.tau_multiplier, config.k_max, config.fixed_levels);
  LevelModel model = merge_to_subpopulations(res.preclustering, sel.clustering, in);
  model.err_curve = sel.err_curve;
  model.threshold_used = sel.tau;
  model.did_not_converge = sel.did_not_converge;
  lap("merge");

  const SmoothingIndex index(in);
  const std::vector<double> smoothed = index.smooth_all();
  model = run_em(in, model, smoothed, config.em_iters);
  model.smoothed_ite = smoothed;
  lap("refine");

  Diagnostics& diag = res.diagnostics;
  diag.n_subjects = data.n();
  diag.n_eligible = in.n();
  diag.num_clusters = res.preclustering.clusters.size();
  diag.dropped_clusters = res.preclustering.dropped;
  diag.epsilon = epsilon_of(in.n(), data.d);
  diag.tau = sel.tau;
  diag.did_not_converge = sel.did_not_converge;
  res.ite = in.ite;
  res.eligible = in.eligible;
  res.model = std::move(model);
  return res;
}

}  // namespace pcm
