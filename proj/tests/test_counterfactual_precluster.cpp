#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "pcm/counterfactual.hpp"
#include "pcm/precluster.hpp"
#include "pcm/synthgen.hpp"

using namespace pcm;

namespace {

Subject at(std::vector<double> x, int t, double y, std::optional<double> ybar = std::nullopt) {
  return Subject{std::move(x), t, y, ybar, std::nullopt};
}

// Brute-force k nearest controls ordered by (squared distance, index).
std::vector<std::size_t> brute_knn(const Dataset& ds, std::span<const double> x, std::size_t k) {
  std::vector<std::pair<double, std::size_t>> cand;
  for (std::size_t i = 0; i < ds.n(); ++i) {
    if (ds.subjects[i].t != 0) continue;
    double d2 = 0;
    for (std::size_t j = 0; j < ds.d; ++j) d2 += (ds.subjects[i].x[j] - x[j]) * (ds.subjects[i].x[j] - x[j]);
    cand.emplace_back(d2, i);
  }
  std::sort(cand.begin(), cand.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(cand[i].second);
  return out;
}

}  // namespace

TEST(Knn, SmallExamples) {
  Dataset ds{1, {at({0.0}, 0, 1.0), at({0.5}, 0, 3.0), at({0.1}, 1, 9.0)}};
  const std::vector<double> q1{0.1}, q2{0.25}, q3{0.9};
  EXPECT_EQ(fit_knn(ds, 1).predict(q1), 1.0);
  EXPECT_EQ(fit_knn(ds, 2).predict(q1), 2.0);
  EXPECT_EQ(fit_knn(ds, 2).predict(q3), 2.0);
  EXPECT_EQ(fit_knn(ds, 1).predict(q2), 1.0);  // equidistant; lower index wins
  EXPECT_EQ(fit_knn(ds, 0).k(), 2u);          // ceil(sqrt(2))
}

TEST(Knn, InsufficientControls) {
  Dataset ds{1, {at({0.0}, 0, 1.0), at({0.5}, 1, 3.0)}};
  try {
    fit_knn(ds, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InsufficientControls);
  }
}

TEST(Knn, GridSearchMatchesBruteForce) {
  for (std::size_t d : {1u, 2u, 3u, 5u}) {
    SynthSpec s;
    s.d = d;
    s.mu_control = {0.0};
    s.mu_treated = {1.0};
    s.n = 1500;
    s.seed = d;
    Dataset ds = generate(s);
    // duplicate a few points to exercise distance ties
    for (std::size_t i = 0; i < 20; ++i) ds.subjects[2 * i + 1].x = ds.subjects[2 * i].x;
    for (std::size_t k : {1u, 7u, 40u}) {
      const KnnRegressor knn = fit_knn(ds, k);
      for (std::size_t q = 0; q < 60; ++q) {
        const auto& x = ds.subjects[q * 17 % ds.n()].x;
        EXPECT_EQ(knn.neighbors(x), brute_knn(ds, x, k)) << "d=" << d << " k=" << k;
      }
    }
  }
}

TEST(Attach, GivenIsPassThroughAndKnnIsExactWithoutNoise) {
  SynthSpec s = default_spec();
  s.n = 20000;
  s.sigma = 0.0;
  const Dataset ds = generate(s);
  EXPECT_EQ(attach_counterfactuals(ds, CfMode::Given), ds);
  const Dataset knn = attach_counterfactuals(ds, CfMode::Knn, 0);
  std::size_t checked = 0;
  for (std::size_t i = 0; i < ds.n(); ++i) {
    const Subject& sub = knn.subjects[i];
    if (sub.t != 1) continue;
    const double a = sub.x[0], b = sub.x[1];
    if (a > 0.05 && a < 0.3 && b > 0.05 && b < 0.3) {  // deep inside a level-1 square
      EXPECT_EQ(*sub.ybar, 0.0);
      EXPECT_EQ(compute_ite(sub), 1.0);
      ++checked;
    }
  }
  EXPECT_GT(checked, 100u);
}

TEST(Attach, GivenRequiresTreatedCounterfactuals) {
  Dataset ds{1, {at({0.1}, 1, 1.0), at({0.2}, 0, 0.0)}};
  EXPECT_THROW(attach_counterfactuals(ds, CfMode::Given), Error);
  EXPECT_NO_THROW(attach_counterfactuals(ds, CfMode::ControlDiff));
}

TEST(ControlDiff, ArmMeans) {
  Dataset ds{1, {at({0.1}, 1, 2), at({0.1}, 1, 4), at({0.1}, 0, 1), at({0.2}, 1, 5), at({0.2}, 0, 5)}};
  const std::vector<std::size_t> a{0, 1, 2}, b{3, 4}, c{0, 1};
  EXPECT_EQ(control_diff_att(ds, a), 2.0);
  EXPECT_EQ(control_diff_att(ds, b), 0.0);
  try {
    control_diff_att(ds, c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::OneSidedCluster);
  }
}

TEST(BoxPartition, TwoCellExample) {
  // ITEs 1, 3, 5, 7 with y - ybar = ITE on treated subjects
  Dataset ds{1, {at({0.1}, 1, 1, 0), at({0.2}, 1, 3, 0), at({0.7}, 1, 5, 0), at({0.8}, 1, 7, 0)}};
  const PreClustering pc = box_partition(ds);
  EXPECT_DOUBLE_EQ(pc.epsilon, 0.5);
  ASSERT_EQ(pc.clusters.size(), 2u);
  EXPECT_EQ(pc.clusters[0].att, 2.0);
  EXPECT_EQ(pc.clusters[1].att, 6.0);
  EXPECT_EQ(pc.clusters[0].members, (std::vector<std::size_t>{0, 1}));
}

TEST(BoxPartition, SingleCellAndPartitionProperty) {
  Dataset one{1, {at({0.1}, 1, 1, 0), at({0.2}, 0, 0, 2), at({0.3}, 1, 4, 0)}};
  const PreClustering pc = box_partition(one);  // n=3 -> one cell
  ASSERT_EQ(pc.clusters.size(), 1u);
  EXPECT_EQ(pc.clusters[0].att, (1.0 + 2.0 + 4.0) / 3.0);

  SynthSpec s = default_spec();
  s.n = 5000;
  const Dataset ds = generate(s);
  const PreClustering big = box_partition(ds);
  std::vector<int> seen(ds.n(), 0);
  for (const Cluster& c : big.clusters) {
    EXPECT_FALSE(c.members.empty());
    for (std::size_t i : c.members) {
      ++seen[i];
      EXPECT_EQ(box_index(ds.subjects[i].x, big.epsilon), c.key);
    }
  }
  for (int v : seen) EXPECT_EQ(v, 1);
}

TEST(BoxPartition, ControlDiffDropsOneSidedCells) {
  Dataset ds{1, {at({0.1}, 1, 3), at({0.2}, 0, 1), at({0.7}, 1, 5), at({0.8}, 1, 7)}};
  const PreClustering pc = box_partition(make_effect_input(ds, CfMode::ControlDiff));
  ASSERT_EQ(pc.clusters.size(), 1u);
  EXPECT_EQ(pc.clusters[0].att, 2.0);
  EXPECT_EQ(pc.dropped, 1u);
  EXPECT_EQ(pc.dropped_members, (std::vector<std::size_t>{2, 3}));
}

TEST(KMeans, ExtremeK) {
  SynthSpec s = default_spec();
  s.n = 50;
  const Dataset ds = generate(s);
  const PreClustering all = kmeans_partition(ds, ds.n(), 3);
  ASSERT_EQ(all.clusters.size(), ds.n());
  for (const Cluster& c : all.clusters) {
    ASSERT_EQ(c.members.size(), 1u);
    EXPECT_EQ(c.att, compute_ite(ds.subjects[c.members[0]]));
  }
  const PreClustering one = kmeans_partition(ds, 1, 3);
  ASSERT_EQ(one.clusters.size(), 1u);
  double sum = 0;
  for (const Subject& sub : ds.subjects) sum += compute_ite(sub);
  EXPECT_NEAR(one.clusters[0].att, sum / 50.0, 1e-12);
}

TEST(KMeans, SeparatedBlobsBeatEveryOtherSplit) {
  Dataset ds{2,
             {at({0.10, 0.10}, 1, 0, 0), at({0.12, 0.11}, 1, 0, 0), at({0.09, 0.13}, 1, 0, 0),
              at({0.11, 0.08}, 1, 0, 0), at({0.90, 0.88}, 1, 1, 0), at({0.91, 0.90}, 1, 1, 0),
              at({0.88, 0.92}, 1, 1, 0)}};
  const std::vector<std::size_t> pts{0, 1, 2, 3, 4, 5, 6};
  auto cost = [&](const std::vector<int>& lab) {
    double total = 0;
    for (int g = 0; g < 2; ++g) {
      double mx = 0, my = 0;
      int cnt = 0;
      for (std::size_t i = 0; i < 7; ++i)
        if (lab[i] == g) mx += ds.subjects[i].x[0], my += ds.subjects[i].x[1], ++cnt;
      if (cnt == 0) return std::numeric_limits<double>::infinity();
      mx /= cnt, my /= cnt;
      for (std::size_t i = 0; i < 7; ++i)
        if (lab[i] == g)
          total += (ds.subjects[i].x[0] - mx) * (ds.subjects[i].x[0] - mx) +
                   (ds.subjects[i].x[1] - my) * (ds.subjects[i].x[1] - my);
    }
    return total;
  };
  const std::vector<int> blobs{0, 0, 0, 0, 1, 1, 1};
  const double blob_cost = cost(blobs);
  for (int mask = 1; mask < 127; ++mask) {
    std::vector<int> lab(7);
    for (int i = 0; i < 7; ++i) lab[static_cast<std::size_t>(i)] = (mask >> i) & 1;
    if (lab == blobs || mask == 0b0001111) continue;  // same split, labels swapped
    EXPECT_LT(blob_cost, cost(lab));
  }
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const KMeansResult km = lloyd_kmeans(ds, pts, 2, seed);
    for (std::size_t i = 1; i < 4; ++i) EXPECT_EQ(km.label[i], km.label[0]);
    for (std::size_t i = 5; i < 7; ++i) EXPECT_EQ(km.label[i], km.label[4]);
    EXPECT_NE(km.label[0], km.label[4]);
  }
}

TEST(KMeans, DeterministicPerSeed) {
  SynthSpec s = default_spec();
  s.n = 3000;
  const Dataset ds = generate(s);
  const PreClustering a = kmeans_partition(ds, 0, 42), b = kmeans_partition(ds, 0, 42);
  ASSERT_EQ(a.clusters.size(), b.clusters.size());
  for (std::size_t c = 0; c < a.clusters.size(); ++c) {
    EXPECT_EQ(a.clusters[c].members, b.clusters[c].members);
    EXPECT_EQ(a.clusters[c].att, b.clusters[c].att);
  }
  EXPECT_LE(a.clusters.size(), 55u);  // ceil(sqrt(3000)) = 55, empties dropped
}
