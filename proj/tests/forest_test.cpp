#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "abif/data.hpp"
#include "abif/forest.hpp"

namespace abif {
namespace {

double exact_harmonic(std::uint64_t m) {
  long double h = 0.0L;
  for (std::uint64_t i = 1; i <= m; ++i) h += 1.0L / static_cast<long double>(i);
  return static_cast<double>(h);
}

Dataset random_dataset(std::size_t n, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Dataset data;
  data.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < data.features.size(); ++i)
    data.features.data()[i] = g(rng);
  return data;
}

TEST(Harmonic, SmallValues) {
  EXPECT_EQ(harmonic(1), 1.0);
  EXPECT_EQ(harmonic(2), 1.5);
  EXPECT_THROW(harmonic(0), std::invalid_argument);
}

TEST(Harmonic, ApproximationAgreesWithExactSumAboveCrossover) {
  // ln(255) + gamma = 6.11847...; the exact sum differs by about 1/510.
  EXPECT_NEAR(harmonic(255), 6.11847, 5e-5);
  for (std::uint64_t m = kExactHarmonicLimit + 1; m < 2000; m += 37)
    EXPECT_LT(std::abs(harmonic(m) - exact_harmonic(m)), 0.005) << m;
  for (std::uint64_t m = 1; m <= kExactHarmonicLimit; ++m)
    EXPECT_NEAR(harmonic(m), exact_harmonic(m), 1e-12);
}

TEST(CFactor, KnownValues) {
  EXPECT_EQ(c_factor(0), 0.0);
  EXPECT_EQ(c_factor(1), 0.0);
  EXPECT_EQ(c_factor(2), 1.0);
  EXPECT_NEAR(c_factor(3), 2.0 * 1.5 - 4.0 / 3.0, 1e-15);
  const double oracle = 2.0 * exact_harmonic(255) - 2.0 * 255.0 / 256.0;
  EXPECT_NEAR(oracle, 10.2487, 1e-4);
  EXPECT_NEAR(c_factor(256), oracle, 0.005);
}

TEST(CFactor, NondecreasingFromTwo) {
  for (std::uint64_t m = 2; m < 5000; ++m)
    ASSERT_LE(c_factor(m), c_factor(m + 1)) << m;
}

TEST(AnomalyScore, Values) {
  const double c = 10.24;
  EXPECT_DOUBLE_EQ(anomaly_score(c, c), 0.5);
  EXPECT_DOUBLE_EQ(anomaly_score(0.0, c), 1.0);
  EXPECT_DOUBLE_EQ(anomaly_score(2 * c, c), 0.25);
  EXPECT_THROW(anomaly_score(1.0, 0.0), std::invalid_argument);
  EXPECT_THROW(anomaly_score(1.0, -1.0), std::invalid_argument);
}

TEST(AnomalyScore, StrictlyDecreasing) {
  double prev = anomaly_score(0.0, 3.0);
  for (double e = 0.01; e < 50.0; e += 0.01) {
    const double s = anomaly_score(e, 3.0);
    ASSERT_LT(s, prev);
    prev = s;
  }
}

TEST(Classify, StrictThreshold) {
  EXPECT_EQ(classify(0.9, 0.5), kAnomaly);
  EXPECT_EQ(classify(0.3, 0.5), kNormal);
  EXPECT_EQ(classify(0.5, 0.5), kNormal);
}

TEST(BuildTree, SingleRowIsOneLeaf) {
  RowMatrix x(1, 3);
  x << 1.0, 2.0, 3.0;
  std::mt19937_64 rng(1);
  const IsolationTree t = build_tree(x, 8, rng);
  ASSERT_EQ(t.nodes().size(), 1u);
  const auto& leaf = std::get<Leaf>(t.nodes()[0]);
  EXPECT_EQ(leaf.size, 1u);
  EXPECT_EQ(leaf.depth, 0);
  EXPECT_EQ(leaf.centroid, (std::vector<double>{1.0, 2.0, 3.0}));
}

TEST(BuildTree, TwoDistinctRowsSplitIntoTwoLeaves) {
  // Rows differ in both features, so whichever feature is drawn the
  // split lies strictly between the two values and separates them.
  RowMatrix x(2, 2);
  x << 0.0, 5.0, 1.0, -5.0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    std::mt19937_64 rng(seed);
    const IsolationTree t = build_tree(x, 1, rng);
    ASSERT_EQ(t.nodes().size(), 3u);
    const auto& s = std::get<Split>(t.nodes()[0]);
    const double lo = std::min(x(0, s.feature), x(1, s.feature));
    const double hi = std::max(x(0, s.feature), x(1, s.feature));
    EXPECT_GE(s.value, lo);
    EXPECT_LT(s.value, hi);
    for (auto* leaf : t.leaves()) {
      EXPECT_EQ(leaf->size, 1u);
      EXPECT_EQ(leaf->depth, 1);
    }
  }
}

TEST(BuildTree, HeightLimitZeroGivesRootLeaf) {
  const Dataset d = random_dataset(37, 4, 3);
  std::mt19937_64 rng(5);
  const IsolationTree t = build_tree(d.features, 0, rng);
  ASSERT_EQ(t.nodes().size(), 1u);
  const auto& leaf = std::get<Leaf>(t.nodes()[0]);
  EXPECT_EQ(leaf.size, 37u);
  EXPECT_DOUBLE_EQ(t.path_length(d.row(0)), c_factor(37));
}

TEST(BuildTree, IdenticalRowsStop) {
  RowMatrix x(5, 2);
  x.setConstant(2.5);
  std::mt19937_64 rng(9);
  const IsolationTree t = build_tree(x, 10, rng);
  ASSERT_EQ(t.nodes().size(), 1u);
  EXPECT_EQ(std::get<Leaf>(t.nodes()[0]).size, 5u);
}

TEST(BuildTree, ConstantFeatureNeverChosen) {
  RowMatrix x(64, 3);
  std::mt19937_64 g(2);
  std::uniform_real_distribution<double> u(-1, 1);
  for (Eigen::Index i = 0; i < 64; ++i) x.row(i) << u(g), 7.0, u(g);
  std::mt19937_64 rng(4);
  const IsolationTree t = build_tree(x, 10, rng);
  for (const auto& n : t.nodes())
    if (const auto* s = std::get_if<Split>(&n)) EXPECT_NE(s->feature, 1u);
}

TEST(BuildTree, EmptySubsampleThrows) {
  RowMatrix x(3, 2);
  x.setZero();
  std::mt19937_64 rng(1);
  std::vector<std::size_t> none;
  EXPECT_THROW(build_tree(x, none, 4, rng), std::invalid_argument);
}

TEST(PathLength, AddsCFactorOfLeafSize) {
  // Hand-built tree: root splits x0 <= 0; right child splits x1 <= 0.
  std::vector<TreeNode> nodes;
  nodes.emplace_back(Split{0, 0.0, 1, 2});
  nodes.emplace_back(Leaf{1, 1, {-1.0, 0.0}});
  nodes.emplace_back(Split{1, 0.0, 3, 4});
  nodes.emplace_back(Leaf{3, 2, {1.0, -1.0}});
  nodes.emplace_back(Leaf{2, 2, {1.0, 1.0}});
  const IsolationTree t(std::move(nodes), 2);
  const std::vector<double> a{-0.5, 3.0}, b{0.5, -2.0}, c{0.5, 2.0};
  EXPECT_DOUBLE_EQ(t.path_length(a), 1.0);
  EXPECT_NEAR(t.path_length(b), 2.0 + (2.0 * 1.5 - 4.0 / 3.0), 1e-12);
  EXPECT_NEAR(t.path_length(b), 3.6667, 1e-4);
  EXPECT_DOUBLE_EQ(t.path_length(c), 3.0);
  const std::vector<double> bad{1.0};
  EXPECT_THROW(t.path_length(bad), std::invalid_argument);
}

TEST(BuildForest, DeterministicForFixedSeed) {
  const Dataset d = random_dataset(300, 3, 11);
  ForestOptions o;
  o.trees = 150;
  o.seed = 7;
  const IsolationForest a = build_forest(d, o);
  const IsolationForest b = build_forest(d, o);
  ASSERT_EQ(a.size(), 150u);
  EXPECT_EQ(a.psi, 256u);
  EXPECT_EQ(a.height_limit, 8);
  for (std::size_t k = 0; k < a.size(); ++k) {
    const auto& na = a.trees[k].nodes();
    const auto& nb = b.trees[k].nodes();
    ASSERT_EQ(na.size(), nb.size());
    for (std::size_t i = 0; i < na.size(); ++i) {
      ASSERT_EQ(na[i].index(), nb[i].index());
      if (const auto* s = std::get_if<Split>(&na[i])) {
        const auto& t = std::get<Split>(nb[i]);
        EXPECT_EQ(s->feature, t.feature);
        EXPECT_EQ(std::bit_cast<std::uint64_t>(s->value),
                  std::bit_cast<std::uint64_t>(t.value));
      }
    }
  }
}

TEST(BuildForest, ParallelBuildMatchesSerial) {
  const Dataset d = random_dataset(200, 2, 5);
  ForestOptions o;
  o.trees = 20;
  o.seed = 3;
  const IsolationForest serial = build_forest(d, o);
  o.threads = 4;
  const IsolationForest par = build_forest(d, o);
  for (std::size_t i = 0; i < d.rows(); ++i)
    EXPECT_EQ(mean_path_length(serial, d.row(i)), mean_path_length(par, d.row(i)));
}

TEST(BuildForest, SingleTreeAndFullSubsample) {
  const Dataset d = random_dataset(40, 2, 8);
  ForestOptions o;
  o.trees = 1;
  o.subsample = 40;
  o.height_limit = 100;
  const IsolationForest f = build_forest(d, o);
  ASSERT_EQ(f.size(), 1u);
  // With psi = n and no depth cap every training row ends in its own leaf.
  std::size_t total = 0;
  for (auto* leaf : f.trees[0].leaves()) {
    EXPECT_EQ(leaf->size, 1u);
    total += leaf->size;
  }
  EXPECT_EQ(total, 40u);
  EXPECT_DOUBLE_EQ(mean_path_length(f, d.row(3)), f.trees[0].path_length(d.row(3)));
}

TEST(BuildForest, RejectsBadSubsample) {
  const Dataset d = random_dataset(10, 2, 1);
  ForestOptions o;
  o.subsample = 11;
  EXPECT_THROW(build_forest(d, o), std::invalid_argument);
  o.subsample = 1;
  EXPECT_THROW(build_forest(d, o), std::invalid_argument);
  o.subsample = 0;
  o.trees = 0;
  EXPECT_THROW(build_forest(d, o), std::invalid_argument);
}

// Recovers each leaf's members by routing the tree's own subsample
// (regenerated from the per-tree generator) and re-aggregating.
TEST(ForestProperties, LeafSizesAndCentroids) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const Dataset d = random_dataset(120, 3, seed);
    ForestOptions o;
    o.trees = 10;
    o.subsample = 64;
    o.seed = seed;
    const IsolationForest f = build_forest(d, o);
    for (std::size_t k = 0; k < f.size(); ++k) {
      auto rng = tree_rng(seed, k);
      std::vector<std::size_t> idx(d.rows());
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      for (std::size_t i = 0; i < o.subsample; ++i) {
        std::uniform_int_distribution<std::size_t> u(i, d.rows() - 1);
        std::swap(idx[i], idx[u(rng)]);
      }
      idx.resize(o.subsample);

      std::map<const Leaf*, std::vector<std::size_t>> members;
      for (std::size_t r : idx) members[&f.trees[k].leaf_for(d.row(r))].push_back(r);
      std::size_t total = 0;
      for (auto* leaf : f.trees[k].leaves()) {
        total += leaf->size;
        const auto& m = members[leaf];
        ASSERT_EQ(m.size(), leaf->size);
        for (std::size_t q = 0; q < d.dims(); ++q) {
          double s = 0.0;
          for (std::size_t r : m) s += d.row(r)[q];
          const double mean = s / static_cast<double>(m.size());
          EXPECT_LE(std::abs(mean - leaf->centroid[q]),
                    1e-12 * std::max(1.0, std::abs(mean)));
        }
        EXPECT_LE(leaf->depth, f.height_limit);
      }
      EXPECT_EQ(total, o.subsample);
    }
  }
}

TEST(ForestProperties, PathBoundsAndRoutingDeterminism) {
  const Dataset d = random_dataset(500, 4, 21);
  ForestOptions o;
  o.trees = 25;
  o.seed = 9;
  const IsolationForest f = build_forest(d, o);
  std::mt19937_64 g(3);
  std::normal_distribution<double> n(0.0, 2.0);
  for (int q = 0; q < 200; ++q) {
    std::vector<double> x(4);
    for (double& v : x) v = n(g);
    double lo = 1e300, hi = -1e300;
    for (const auto& t : f.trees) {
      const Leaf& leaf = t.leaf_for(x);
      EXPECT_EQ(&leaf, &t.leaf_for(x));
      const double h = t.path_length(x);
      EXPECT_GE(h, c_factor(leaf.size));
      EXPECT_LE(leaf.depth, f.height_limit);
      lo = std::min(lo, h);
      hi = std::max(hi, h);
    }
    const double e = mean_path_length(f, x);
    EXPECT_GE(e, lo - 1e-12);
    EXPECT_LE(e, hi + 1e-12);
  }
}

TEST(MeanPathLength, ArithmeticMean) {
  std::vector<TreeNode> a{Leaf{1, 3, {0.0}}}, b{Leaf{1, 5, {0.0}}};
  IsolationForest f;
  f.trees = {IsolationTree(a, 1), IsolationTree(b, 1)};
  f.dims = 1;
  const std::vector<double> x{0.0};
  EXPECT_DOUBLE_EQ(mean_path_length(f, x), 4.0);
  const std::vector<double> bad{0.0, 1.0};
  EXPECT_THROW(mean_path_length(f, bad), std::invalid_argument);
}

TEST(ScoreRule, ClassifyMatchesGammaRuleOffBoundary) {
  const double c = c_factor(256);
  std::mt19937_64 g(17);
  std::uniform_real_distribution<double> e(0.0, 30.0);
  for (double tau : {0.3, 0.5, 0.6, 0.7}) {
    const double gamma = -c * std::log2(tau);
    for (int i = 0; i < 2000; ++i) {
      const double v = e(g);
      if (std::abs(v - gamma) < 1e-9) continue;
      EXPECT_EQ(classify(anomaly_score(v, c), tau) == kAnomaly, v < gamma);
    }
  }
}

}  // namespace
}  // namespace abif
