#include <algorithm>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "abif/eval.hpp"

namespace abif {
namespace {

TEST(F1, Values) {
  const std::vector<int> t{1, -1, 1, -1, 1};
  EXPECT_DOUBLE_EQ(f1_score(t, t), 1.0);
  std::vector<int> neg(t.size());
  std::transform(t.begin(), t.end(), neg.begin(), [](int v) { return -v; });
  EXPECT_EQ(f1_score(neg, t), 0.0);
  // TP=2, FP=1, FN=1.
  const std::vector<int> truth{1, 1, 1, -1, -1}, pred{1, 1, -1, 1, -1};
  EXPECT_NEAR(f1_score(pred, truth), 4.0 / 6.0, 1e-15);
  const std::vector<int> none{-1, -1}, two{1, 1};
  EXPECT_THROW(f1_score(two, none), std::invalid_argument);
  EXPECT_THROW(f1_score(pred, two), std::invalid_argument);
}

TEST(F1, PermutationInvarianceAndMonotoneFix) {
  std::mt19937_64 g(1);
  for (int i = 0; i < 500; ++i) {
    const std::size_t n = 2 + g() % 40;
    std::vector<int> p(n), t(n);
    for (std::size_t k = 0; k < n; ++k) {
      p[k] = (g() & 1) ? 1 : -1;
      t[k] = (g() % 3 == 0) ? 1 : -1;
    }
    t[g() % n] = 1;
    const double f = f1_score(p, t);
    EXPECT_GE(f, 0.0);
    EXPECT_LE(f, 1.0);

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), g);
    std::vector<int> ps(n), ts(n);
    for (std::size_t k = 0; k < n; ++k) {
      ps[k] = p[perm[k]];
      ts[k] = t[perm[k]];
    }
    EXPECT_DOUBLE_EQ(f1_score(ps, ts), f);

    for (std::size_t k = 0; k < n; ++k)
      if (t[k] == 1 && p[k] == -1) {
        p[k] = 1;
        EXPECT_GE(f1_score(p, t), f);
        break;
      }
  }
}

TEST(Mode, Names) {
  EXPECT_EQ(mode_from_string("iforest"), Mode::kIForest);
  EXPECT_EQ(to_string(mode_from_string("abiforest")), "abiforest");
  EXPECT_THROW(mode_from_string("forest"), std::invalid_argument);
}

TEST(Expand, DefaultGridAndCollapsedIForestAxes) {
  const Grid g;
  EXPECT_EQ(expand(g, ModelConfig{}).size(), 5u * 5u * 9u * 5u);
  Grid i = g;
  i.modes = {Mode::kIForest};
  const auto cells = expand(i, ModelConfig{});
  EXPECT_EQ(cells.size(), 5u * 9u);
  EXPECT_EQ(cells.front().trees, 5u);
  EXPECT_EQ(cells.front().tau, 0.3);
  Grid empty = g;
  empty.taus.clear();
  EXPECT_THROW(expand(empty, ModelConfig{}), std::invalid_argument);
}

TEST(Summarize, SingleRepHasZeroSd) {
  const CellStats s = summarize({0.7}, {3});
  EXPECT_EQ(s.mean, 0.7);
  EXPECT_EQ(s.sd, 0.0);
  const CellStats t = summarize({1.0, 0.0}, {1, 2});
  EXPECT_DOUBLE_EQ(t.mean, 0.5);
  EXPECT_DOUBLE_EQ(t.sd, std::sqrt(0.5));
}

// Re-does one repetition with the plain per-instance pipeline and compares
// it with the table-slicing evaluator.
double direct_f1(const Dataset& data, const ModelConfig& c, std::uint64_t seed) {
  const TrainTest tt = split(data, SplitSpec{2.0 / 3.0, seed, true});
  ForestOptions fo;
  fo.trees = c.trees;
  fo.seed = seed;
  const IsolationForest f = build_forest(tt.train, fo);
  std::vector<int> pred(tt.test.rows());
  if (c.mode == Mode::kIForest) {
    for (std::size_t i = 0; i < pred.size(); ++i)
      pred[i] = classify(iforest_score(f, tt.test.row(i)), c.tau);
  } else {
    const AttentionModel m = fit(f, tt.train, c.fit_config()).model;
    for (std::size_t i = 0; i < pred.size(); ++i)
      pred[i] = abif_score(f, m, tt.test.row(i)).label;
  }
  return f1_score(pred, *tt.test.labels);
}

TEST(GridSearch, MatchesDirectPipelinePerCell) {
  const Dataset data = gen_circle(150, 30, 0.1, 5);
  Grid g;
  g.modes = {Mode::kIForest, Mode::kABIForest};
  g.trees = {5, 20};
  g.taus = {0.5, 0.6};
  g.epsilons = {0.0, 0.5, 1.0};
  g.omegas = {10.0, 20.0};
  EvalOptions opt;
  opt.reps = 2;
  opt.base_seed = 3;
  const EvalReport rep = grid_search(data, g, ModelConfig{}, opt);
  ASSERT_EQ(rep.cells.size(), 2u * 2u + 2u * 2u * 2u * 3u);
  for (std::size_t i = 0; i < rep.cells.size(); ++i) {
    ASSERT_EQ(rep.stats[i].reps(), 2u);
    for (std::size_t r = 0; r < 2; ++r) {
      EXPECT_EQ(rep.stats[i].seeds[r], rep_seed(3, r));
      EXPECT_DOUBLE_EQ(rep.stats[i].f1[r], direct_f1(data, rep.cells[i], rep_seed(3, r)))
          << "cell " << i << " rep " << r;
    }
    EXPECT_GE(rep.stats[rep.best].mean, rep.stats[i].mean);
  }
}

TEST(RepeatedEval, SingleRepAndDeterminism) {
  const Dataset data = gen_normal(120, 12, 2);
  ModelConfig c;
  c.trees = 15;
  EvalOptions opt;
  opt.reps = 1;
  const CellStats one = repeated_eval(data, c, opt);
  EXPECT_EQ(one.sd, 0.0);
  EXPECT_EQ(one.mean, one.f1[0]);

  opt.reps = 4;
  const CellStats a = repeated_eval(data, c, opt);
  opt.threads = 3;
  const CellStats b = repeated_eval(data, c, opt);
  EXPECT_EQ(a.f1, b.f1);

  const EvalReport r = grid_search(data, singleton_grid(c), c, opt);
  ASSERT_EQ(r.cells.size(), 1u);
  EXPECT_EQ(r.stats[0].f1, a.f1);
  EXPECT_THROW(repeated_eval(data, c, EvalOptions{0}), std::invalid_argument);
}

TEST(RepeatedEval, FailureReportsSeed) {
  Dataset data = gen_normal(60, 6, 2);
  ModelConfig c;
  c.trees = 5;
  c.subsample = 1000;  // larger than any training split
  EvalOptions opt;
  opt.reps = 3;
  opt.base_seed = 10;
  try {
    repeated_eval(data, c, opt);
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("seed 11"), std::string::npos) << e.what();
  }
}

TEST(SizeStudy, SingleSizeReducesToRepeatedEval) {
  const Generator gen = [](std::size_t n, std::uint64_t seed) {
    return gen_circle(n * 5 / 6, n - n * 5 / 6, 0.1, seed);
  };
  ModelConfig c;
  c.mode = Mode::kIForest;
  c.trees = 10;
  EvalOptions opt;
  opt.reps = 3;
  const std::vector<std::size_t> sizes{60};
  const std::vector<ModelConfig> cfgs{c};
  const auto rows = size_study(gen, sizes, cfgs, opt);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].stats.f1, repeated_eval(gen(60, opt.base_seed), c, opt).f1);
  const std::vector<std::size_t> none;
  EXPECT_THROW(size_study(gen, none, cfgs, opt), std::invalid_argument);
}

TEST(Report, CsvAndSummaryAreDeterministic) {
  const Dataset data = gen_circle(90, 18, 0.1, 1);
  Grid g;
  g.modes = {Mode::kIForest};
  g.trees = {5, 10};
  g.taus = {0.5};
  EvalOptions opt;
  opt.reps = 3;
  auto render = [&] {
    const EvalReport r = grid_search(data, g, ModelConfig{}, opt);
    std::ostringstream out;
    write_report_csv(out, r);
    return out.str() + report_summary(r).dump();
  };
  const std::string a = render();
  EXPECT_EQ(a, render());
  // 2 cells x 3 reps + 2 mean rows + header.
  std::istringstream in(a);
  std::string line;
  int lines = 0;
  while (std::getline(in, line) && line.rfind('{', 0) != 0) ++lines;
  EXPECT_EQ(lines, 1 + 6 + 2);
}

}  // namespace
}  // namespace abif
