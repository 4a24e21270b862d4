#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "abif/attention.hpp"
#include "abif/data.hpp"
#include "abif/forest.hpp"
#include "abif/training.hpp"

namespace abif {

/// F1 with +1 (anomalous) as the positive class; 0 when nothing is hit.
inline double f1_score(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size())
    throw std::invalid_argument("f1_score: length mismatch");
  std::size_t tp = 0, fp = 0, fn = 0, pos = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool p = predicted[i] == kAnomaly, t = truth[i] == kAnomaly;
    pos += t;
    tp += p && t;
    fp += p && !t;
    fn += !p && t;
  }
  if (pos == 0) throw std::invalid_argument("f1_score: truth has no positives");
  if (tp == 0) return 0.0;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

enum class Mode { kIForest, kABIForest };

inline std::string to_string(Mode m) {
  return m == Mode::kIForest ? "iforest" : "abiforest";
}

inline Mode mode_from_string(const std::string& s) {
  if (s == "iforest") return Mode::kIForest;
  if (s == "abiforest") return Mode::kABIForest;
  throw std::invalid_argument("unknown mode '" + s + "'");
}

struct ModelConfig {
  Mode mode = Mode::kABIForest;
  std::size_t trees = 150;
  std::size_t subsample = 0;
  int height_limit = -1;
  double tau = 0.5;
  double epsilon = 0.5;
  double omega = 20.0;
  double lambda = 1e-3;
  LabelSource label_source = LabelSource::kGiven;
  double solver_tol = 1e-6;
  int max_iters = 5000;

  FitConfig fit_config() const {
    return {epsilon, omega, tau, lambda, solver_tol, max_iters, label_source};
  }
};

inline nlohmann::json to_json(const ModelConfig& c) {
  nlohmann::json j = {{"mode", to_string(c.mode)},
                      {"trees", c.trees},
                      {"subsample", c.subsample},
                      {"height_limit", c.height_limit},
                      {"tau", c.tau}};
  if (c.mode == Mode::kABIForest) {
    j["epsilon"] = c.epsilon;
    j["omega"] = c.omega;
    j["lambda"] = c.lambda;
    j["label_source"] = c.label_source == LabelSource::kGiven ? "given" : "pseudo";
  }
  return j;
}

/// Hyperparameter axes. In iforest mode only trees and tau are swept.
struct Grid {
  std::vector<Mode> modes{Mode::kABIForest};
  std::vector<std::size_t> trees{5, 15, 25, 50, 150};
  std::vector<double> taus{0.3, 0.35, 0.4, 0.45, 0.5, 0.55, 0.6, 0.65, 0.7};
  std::vector<double> epsilons{0.0, 0.25, 0.5, 0.75, 1.0};
  std::vector<double> omegas{0.1, 10.0, 20.0, 30.0, 40.0};
  std::vector<double> lambdas{1e-3};
};

inline Grid singleton_grid(const ModelConfig& c) {
  return {{c.mode}, {c.trees}, {c.tau}, {c.epsilon}, {c.omega}, {c.lambda}};
}

/// Cartesian product of the grid, ordered mode, trees, omega, tau,
/// epsilon, lambda.
inline std::vector<ModelConfig> expand(const Grid& g, const ModelConfig& base) {
  if (g.modes.empty() || g.trees.empty() || g.taus.empty() ||
      g.epsilons.empty() || g.omegas.empty() || g.lambdas.empty())
    throw std::invalid_argument("grid axes must be non-empty");
  std::vector<ModelConfig> cells;
  for (Mode m : g.modes)
    for (std::size_t t : g.trees) {
      if (m == Mode::kIForest) {
        for (double tau : g.taus) {
          ModelConfig c = base;
          c.mode = m;
          c.trees = t;
          c.tau = tau;
          cells.push_back(c);
        }
        continue;
      }
      for (double om : g.omegas)
        for (double tau : g.taus)
          for (double eps : g.epsilons)
            for (double lam : g.lambdas) {
              ModelConfig c = base;
              c.mode = m;
              c.trees = t;
              c.omega = om;
              c.tau = tau;
              c.epsilon = eps;
              c.lambda = lam;
              cells.push_back(c);
            }
    }
  return cells;
}

struct CellStats {
  double mean = 0.0;
  double sd = 0.0;
  std::vector<double> f1;
  std::vector<std::uint64_t> seeds;

  std::size_t reps() const { return f1.size(); }
};

inline CellStats summarize(std::vector<double> f1, std::vector<std::uint64_t> seeds) {
  CellStats s;
  s.f1 = std::move(f1);
  s.seeds = std::move(seeds);
  const double n = static_cast<double>(s.f1.size());
  for (double v : s.f1) s.mean += v;
  s.mean /= n;
  if (s.f1.size() > 1) {
    double ss = 0.0;
    for (double v : s.f1) ss += (v - s.mean) * (v - s.mean);
    s.sd = std::sqrt(ss / (n - 1.0));
  }
  return s;
}

struct EvalReport {
  std::vector<ModelConfig> cells;
  std::vector<CellStats> stats;
  std::size_t best = 0;
};

struct EvalOptions {
  std::size_t reps = 100;
  std::uint64_t base_seed = 1;
  SplitSpec split{};  // seed is overwritten per repetition
  unsigned threads = 1;
};

inline std::uint64_t rep_seed(std::uint64_t base, std::size_t rep) {
  return base + rep + 1;
}

/// Scores from response-table slices: the first t columns of h/dist.
inline std::vector<int> predict_iforest(const ResponseTable& tab, std::size_t t,
                                        double c_psi, double tau) {
  const auto cols = static_cast<Eigen::Index>(t);
  std::vector<int> out(static_cast<std::size_t>(tab.h.rows()));
  for (Eigen::Index s = 0; s < tab.h.rows(); ++s) {
    const double e = tab.h.row(s).head(cols).mean();
    out[static_cast<std::size_t>(s)] = classify(anomaly_score(e, c_psi), tau);
  }
  return out;
}

inline std::vector<int> predict_abiforest(const Eigen::MatrixXd& h,
                                          const Eigen::MatrixXd& softmax,
                                          const AttentionModel& m, double c_psi) {
  const Eigen::Map<const Eigen::VectorXd> w(m.w.data(),
                                            static_cast<Eigen::Index>(m.w.size()));
  const Eigen::VectorXd e =
      (1.0 - m.epsilon) * (softmax.array() * h.array()).rowwise().sum().matrix() +
      m.epsilon * (h * w);
  std::vector<int> out(static_cast<std::size_t>(h.rows()));
  for (Eigen::Index s = 0; s < e.size(); ++s)
    out[static_cast<std::size_t>(s)] = classify(anomaly_score(e(s), c_psi), m.tau);
  return out;
}

namespace detail {

/// One repetition over all cells: one split, one forest of the largest T,
/// hyperparameter-free tables, then every cell from table slices.
inline std::vector<double> run_repetition(const Dataset& data,
                                          const std::vector<ModelConfig>& cells,
                                          const EvalOptions& opt,
                                          std::uint64_t seed) {
  SplitSpec spec = opt.split;
  spec.seed = seed;
  const TrainTest tt = split(data, spec);
  if (!tt.test.labels) throw std::invalid_argument("evaluation needs labels");

  std::size_t max_t = 0;
  for (const auto& c : cells) max_t = std::max(max_t, c.trees);
  // Subsample and height limit are shared by every cell.
  ForestOptions fo;
  fo.trees = max_t;
  fo.subsample = cells.front().subsample;
  fo.height_limit = cells.front().height_limit;
  fo.seed = seed;
  const IsolationForest forest = build_forest(tt.train, fo);
  const ResponseTable train_tab = response_table(forest, tt.train);
  const ResponseTable test_tab = response_table(forest, tt.test);
  const std::vector<int>& truth = *tt.test.labels;

  std::vector<double> f1(cells.size());
  // Softmax tables keyed by (trees, omega); cells are ordered so that
  // equal keys are adjacent.
  std::size_t cached_t = 0;
  double cached_omega = -1.0;
  Eigen::MatrixXd p_train, p_test;
  ResponseTable train_slice, test_slice;
  std::vector<int> train_labels;

  for (std::size_t i = 0; i < cells.size(); ++i) {
    const ModelConfig& c = cells[i];
    if (c.mode == Mode::kIForest) {
      f1[i] = f1_score(predict_iforest(test_tab, c.trees, forest.c_psi, c.tau),
                       truth);
      continue;
    }
    const auto cols = static_cast<Eigen::Index>(c.trees);
    if (c.trees != cached_t || c.omega != cached_omega) {
      train_slice = {train_tab.h.leftCols(cols), train_tab.dist.leftCols(cols)};
      test_slice = {test_tab.h.leftCols(cols), test_tab.dist.leftCols(cols)};
      p_train = softmax_rows(train_slice.dist, c.omega);
      p_test = softmax_rows(test_slice.dist, c.omega);
      cached_t = c.trees;
      cached_omega = c.omega;
    }
    if (c.label_source == LabelSource::kPseudo)
      train_labels = predict_iforest(train_slice, c.trees, forest.c_psi, c.tau);
    else
      train_labels = *tt.train.labels;
    const FitResult fr = fit(train_slice, forest.c_psi, train_labels,
                             c.fit_config());
    f1[i] = f1_score(predict_abiforest(test_slice.h, p_test, fr.model,
                                       forest.c_psi),
                     truth);
  }
  return f1;
}

}  // namespace detail

inline EvalReport grid_search(const Dataset& data, const Grid& grid,
                              const ModelConfig& base, const EvalOptions& opt) {
  validate(data);
  if (opt.reps < 1) throw std::invalid_argument("reps must be >= 1");
  EvalReport report;
  report.cells = expand(grid, base);

  const std::size_t reps = opt.reps;
  std::vector<std::vector<double>> per_rep(reps);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::uint64_t failed_seed = 0;
  std::mutex mu;

  auto worker = [&] {
    for (;;) {
      const std::size_t r = next.fetch_add(1);
      if (r >= reps) return;
      const std::uint64_t seed = rep_seed(opt.base_seed, r);
      try {
        per_rep[r] = detail::run_repetition(data, report.cells, opt, seed);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure || seed < failed_seed) {
          failure = std::current_exception();
          failed_seed = seed;
        }
        next = reps;
        return;
      }
    }
  };
  const unsigned workers =
      std::max(1u, std::min<unsigned>(opt.threads, static_cast<unsigned>(reps)));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned i = 0; i < workers; ++i) pool.emplace_back(worker);
  }
  if (failure) {
    try {
      std::rethrow_exception(failure);
    } catch (const std::exception& e) {
      throw std::runtime_error("repetition with seed " +
                               std::to_string(failed_seed) + " failed: " + e.what());
    }
  }

  for (std::size_t i = 0; i < report.cells.size(); ++i) {
    std::vector<double> f1(reps);
    std::vector<std::uint64_t> seeds(reps);
    for (std::size_t r = 0; r < reps; ++r) {
      f1[r] = per_rep[r][i];
      seeds[r] = rep_seed(opt.base_seed, r);
    }
    report.stats.push_back(summarize(std::move(f1), std::move(seeds)));
    if (report.stats[i].mean > report.stats[report.best].mean) report.best = i;
  }
  return report;
}

inline CellStats repeated_eval(const Dataset& data, const ModelConfig& cfg,
                               const EvalOptions& opt) {
  return grid_search(data, singleton_grid(cfg), cfg, opt).stats.front();
}

using Generator = std::function<Dataset(std::size_t n, std::uint64_t seed)>;

struct SizeRow {
  std::size_t n = 0;
  ModelConfig config;
  CellStats stats;
};

/// For each size, generates a fresh dataset and evaluates every config
/// on it with the same repetition seeds.
inline std::vector<SizeRow> size_study(const Generator& gen,
                                       std::span<const std::size_t> sizes,
                                       std::span<const ModelConfig> configs,
                                       const EvalOptions& opt) {
  if (sizes.empty()) throw std::invalid_argument("size_study: no sizes");
  std::vector<SizeRow> rows;
  for (std::size_t n : sizes) {
    const Dataset data = gen(n, opt.base_seed);
    for (const auto& c : configs)
      rows.push_back({n, c, repeated_eval(data, c, opt)});
  }
  return rows;
}

inline void write_report_csv(std::ostream& out, const EvalReport& rep) {
  out << "kind,cell,mode,trees,tau,epsilon,omega,lambda,rep,seed,f1,sd\n";
  auto prefix = [&](const char* kind, std::size_t i) {
    const ModelConfig& c = rep.cells[i];
    const bool abf = c.mode == Mode::kABIForest;
    out << kind << ',' << i << ',' << to_string(c.mode) << ',' << c.trees << ','
        << format_double(c.tau) << ',' << (abf ? format_double(c.epsilon) : "")
        << ',' << (abf ? format_double(c.omega) : "") << ','
        << (abf ? format_double(c.lambda) : "") << ',';
  };
  for (std::size_t i = 0; i < rep.cells.size(); ++i) {
    const CellStats& s = rep.stats[i];
    for (std::size_t r = 0; r < s.reps(); ++r) {
      prefix("rep", i);
      out << r << ',' << s.seeds[r] << ',' << format_double(s.f1[r]) << ",\n";
    }
  }
  for (std::size_t i = 0; i < rep.cells.size(); ++i) {
    prefix("mean", i);
    out << rep.stats[i].reps() << ",," << format_double(rep.stats[i].mean) << ','
        << format_double(rep.stats[i].sd) << '\n';
  }
}

inline nlohmann::json report_summary(const EvalReport& rep) {
  nlohmann::json cells = nlohmann::json::array();
  for (std::size_t i = 0; i < rep.cells.size(); ++i)
    cells.push_back({{"cell", i},
                     {"config", to_json(rep.cells[i])},
                     {"mean_f1", rep.stats[i].mean},
                     {"sd_f1", rep.stats[i].sd},
                     {"reps", rep.stats[i].reps()}});
  return {{"cells", std::move(cells)},
          {"best", {{"cell", rep.best},
                    {"config", to_json(rep.cells[rep.best])},
                    {"mean_f1", rep.stats[rep.best].mean},
                    {"sd_f1", rep.stats[rep.best].sd}}}};
}

}  // namespace abif
