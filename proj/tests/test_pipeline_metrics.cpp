#include <gtest/gtest.h>

#include <cmath>

#include "pcm/metrics.hpp"
#include "pcm/pipeline.hpp"
#include "pcm/synthgen.hpp"

using namespace pcm;

namespace {

Dataset labelled(std::vector<int> labels) {
  Dataset ds{1, {}};
  for (std::size_t i = 0; i < labels.size(); ++i)
    ds.subjects.push_back({{0.1 + 0.8 * static_cast<double>(i) / static_cast<double>(labels.size())},
                           1,
                           0.0,
                           0.0,
                           labels[i]});
  return ds;
}

// Field-wise equality in which NaN smoothed values match each other.
bool same_model(const LevelModel& a, const LevelModel& b) {
  if (a.ell_hat != b.ell_hat || a.mu_hat != b.mu_hat || a.assignment != b.assignment || a.err_curve != b.err_curve ||
      a.threshold_used != b.threshold_used || a.smoothed_ite.size() != b.smoothed_ite.size())
    return false;
  for (std::size_t i = 0; i < a.smoothed_ite.size(); ++i) {
    const double x = a.smoothed_ite[i], y = b.smoothed_ite[i];
    if (!(x == y || (std::isnan(x) && std::isnan(y)))) return false;
  }
  return true;
}

LevelModel model_of(std::vector<double> mu, std::vector<int> assignment) {
  LevelModel m;
  m.ell_hat = mu.size();
  m.mu_hat = std::move(mu);
  m.assignment = std::move(assignment);
  return m;
}

}  // namespace

TEST(Mae, Examples) {
  const Dataset ds = labelled({0, 1, 2, 1});
  const MeanStd perfect = mae(model_of({0, 1, 2}, {0, 1, 2, 1}), ds, {0, 1, 2});
  EXPECT_EQ(perfect.mean, 0.0);
  EXPECT_EQ(perfect.std, 0.0);
  const Dataset ones = labelled({1, 1, 1});
  const MeanStd off = mae(model_of({0.9}, {0, 0, 0}), ones, {0, 1, 2});
  EXPECT_NEAR(off.mean, 0.1, 1e-15);
  EXPECT_NEAR(off.std, 0.0, 1e-15);
  const MeanStd skip = mae(model_of({0.9}, {0, -1, 0}), ones, {0, 1, 2});
  EXPECT_NEAR(skip.mean, 0.1, 1e-15);
}

TEST(Mae, MissingLabelsAndOutOfRangeLevels) {
  Dataset ds = labelled({0, 1});
  ds.subjects[1].c_true.reset();
  try {
    mae(model_of({0}, {0, 0}), ds, {0, 1});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MissingLabels);
  }
  EXPECT_THROW(mae(model_of({0}, {0, 0}), labelled({0, 3}), {0, 1}), Error);
}

TEST(Confusion, IdentityFirstColumnAndRectangular) {
  const Dataset ds = labelled({0, 1, 2, 2, 1, 0});
  const Matrix id = confusion(model_of({0, 1, 2}, {0, 1, 2, 2, 1, 0}), ds, {0, 1, 2});
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(id[r][c], r == c ? 1.0 : 0.0);
  const Matrix col = confusion(model_of({0, 1, 2}, {0, 0, 0, 0, 0, 0}), ds, {0, 1, 2});
  for (std::size_t r = 0; r < 3; ++r) EXPECT_EQ(col[r][0], 1.0);
  const Matrix rect = confusion(model_of({0.5}, {0, 0, 0, 0, 0, 0}), ds, {0, 1, 2});
  EXPECT_EQ(rect.size(), 3u);
  EXPECT_EQ(rect[0].size(), 1u);
  // rows follow ascending true effect, not level index
  const Matrix swapped = confusion(model_of({0, 1, 2}, {0, 1, 2, 2, 1, 0}), ds, {2, 1, 0});
  EXPECT_EQ(swapped[0][2], 1.0);
}

TEST(Homogeneity, PureAndMixed) {
  const Dataset ds = labelled({0, 0, 1, 1, 2, 2});
  PreClustering pc;
  pc.clusters = {{0, {0, 1}, 0.0}, {1, {2, 3}, 0.0}, {2, {4, 5}, 0.0}};
  EXPECT_EQ(homogeneity(pc, ds), 1.0);
  pc.clusters = {{0, {0, 1, 2, 3}, 0.0}, {1, {4, 5}, 0.0}};
  EXPECT_EQ(homogeneity(pc, ds), 0.75);
}

TEST(Bayes, MidpointThresholds) {
  const Dataset ds = labelled({0, 2, 1, 1});
  const std::vector<double> ite{0.4, 1.6, 1.5, 0.5};
  const std::vector<std::size_t> all{0, 1, 2, 3};
  const LevelModel b = bayes_baseline(ite, all, 4, {0, 1, 2});
  EXPECT_EQ(b.assignment, (std::vector<int>{0, 2, 1, 0}));  // 1.5 and 0.5 sit on thresholds
  const BayesBlock blk = evaluate_bayes(ite, all, ds, {0, 1, 2});
  EXPECT_NEAR(blk.raw_ite_mae.mean, (0.4 + 0.4 + 0.5 + 0.5) / 4, 1e-15);
  EXPECT_NEAR(blk.group_means[0], 0.45, 1e-15);
}

TEST(Pipeline, NoiselessRunWithKnownLevelCount) {
  SynthSpec s = default_spec();
  s.sigma = 0.0;
  s.n = 20000;
  const Dataset ds = generate(s);
  PcmConfig cfg;
  cfg.fixed_levels = 3;
  const PcmResult res = run_pcm(ds, cfg);
  ASSERT_EQ(res.model.ell_hat, 3u);
  // boundary cells mix levels, so effects are close but not exact
  for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(res.model.mu_hat[c], static_cast<double>(c), 0.1);
  const double half = res.diagnostics.epsilon / 2;
  for (std::size_t i = 0; i < ds.n(); ++i) {
    bool near_face = false;
    for (double a : ds.subjects[i].x) near_face = near_face || std::abs(a - 0.35) <= half || std::abs(a - 0.65) <= half;
    if (!near_face) {
      EXPECT_EQ(res.model.assignment[i], *ds.subjects[i].c_true);
    }
  }
  const EvalReport r = evaluate(res.model, ds, s.true_effects(), &res.preclustering);
  EXPECT_LT(r.mae.mean, 0.15);
  EXPECT_GT(*r.homogeneity, 0.9);
  EXPECT_EQ(res.diagnostics.n_eligible, 20000u);
  EXPECT_DOUBLE_EQ(res.diagnostics.epsilon, 1.0 / 11);
  EXPECT_EQ(res.diagnostics.timings.size(), 4u);
}

TEST(Pipeline, DeterministicAcrossRunsAndModes) {
  SynthSpec s = default_spec();
  s.n = 6000;
  s.seed = 3;
  const Dataset ds = generate(s);
  for (PreclusterMode pm : {PreclusterMode::Box, PreclusterMode::KMeans}) {
    for (CfMode cf : {CfMode::Given, CfMode::Knn, CfMode::ControlDiff}) {
      PcmConfig cfg;
      cfg.precluster_mode = pm;
      cfg.cf_mode = cf;
      cfg.seed = 5;
      const PcmResult a = run_pcm(ds, cfg), b = run_pcm(ds, cfg);
      EXPECT_TRUE(same_model(a.model, b.model)) << to_string(pm) << "/" << to_string(cf);
      EXPECT_GE(a.model.ell_hat, 1u);
      for (std::size_t c = 1; c < a.model.mu_hat.size(); ++c) EXPECT_LT(a.model.mu_hat[c - 1], a.model.mu_hat[c]);
      if (cf == CfMode::Knn) {
        for (std::size_t i = 0; i < ds.n(); ++i)
          if (ds.subjects[i].t == 0) {
            EXPECT_EQ(a.model.assignment[i], -1);
          }
        EXPECT_GT(a.diagnostics.knn_k, 0u);
      }
    }
  }
}

TEST(Pipeline, RejectsInvalidInput) {
  Dataset bad{2, {{{0.5, 1.5}, 1, 0.0, 0.0, {}}}};
  EXPECT_THROW(run_pcm(bad, PcmConfig{}), Error);
  SynthSpec s = default_spec();
  s.n = 3;
  EXPECT_THROW(run_pcm(generate(s), PcmConfig{}), Error);  // below 2^d
}
