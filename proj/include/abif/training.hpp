#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "abif/attention.hpp"
#include "abif/errors.hpp"
#include "abif/forest.hpp"

namespace abif {

enum class LabelSource { kGiven, kPseudo };

struct FitConfig {
  double epsilon = 0.5;
  double omega = 20.0;
  double tau = 0.6;
  double lambda = 1e-3;
  double solver_tol = 1e-6;
  int max_iters = 5000;
  LabelSource label_source = LabelSource::kGiven;
};

inline void validate(const FitConfig& c) {
  if (!(c.epsilon >= 0.0 && c.epsilon <= 1.0))
    throw std::invalid_argument("epsilon must lie in [0, 1]");
  if (!(c.omega > 0.0)) throw std::invalid_argument("omega must be positive");
  if (!(c.tau > 0.0 && c.tau < 1.0))
    throw std::invalid_argument("tau must lie in (0, 1)");
  if (!(c.lambda >= 0.0)) throw std::invalid_argument("lambda must be >= 0");
  if (!(c.solver_tol > 0.0))
    throw std::invalid_argument("solver_tol must be positive");
  if (c.max_iters < 1) throw std::invalid_argument("max_iters must be >= 1");
}

/// Hinge problem over the simplex:
///   min_w  sum_s max(0, D_s + y_s * eps * (H w)_s) + lambda * |w|^2
struct TrainingProblem {
  Eigen::MatrixXd H;  // n x T path lengths h_k(x_s)
  Eigen::VectorXd D;
  Eigen::VectorXd y;
  double epsilon = 0.0;
  double lambda = 0.0;
  double gamma = 0.0;

  Eigen::Index samples() const { return H.rows(); }
  Eigen::Index trees() const { return H.cols(); }
};

/// Per-sample path lengths and key distances for every tree. Independent
/// of all attention hyperparameters, so one table serves a whole grid.
struct ResponseTable {
  Eigen::MatrixXd h;     // n x T
  Eigen::MatrixXd dist;  // n x T
};

inline ResponseTable response_table(const IsolationForest& forest,
                                    const Dataset& data) {
  check_dims(forest.dims, data.dims());
  const auto n = static_cast<Eigen::Index>(data.rows());
  const auto t = static_cast<Eigen::Index>(forest.size());
  ResponseTable table{Eigen::MatrixXd(n, t), Eigen::MatrixXd(n, t)};
  for (Eigen::Index s = 0; s < n; ++s) {
    const auto x = data.row(static_cast<std::size_t>(s));
    for (Eigen::Index k = 0; k < t; ++k) {
      const Leaf& leaf = forest.trees[static_cast<std::size_t>(k)].leaf_for(x);
      table.h(s, k) = static_cast<double>(leaf.depth) + c_factor(leaf.size);
      table.dist(s, k) = squared_distance(x, leaf.centroid);
    }
  }
  return table;
}

/// Softmax weights of every row of `dist` at width omega.
inline Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& dist, double omega) {
  if (!(omega > 0.0)) throw std::invalid_argument("omega must be positive");
  Eigen::MatrixXd p(dist.rows(), dist.cols());
  for (Eigen::Index s = 0; s < dist.rows(); ++s) {
    const double dmin = dist.row(s).minCoeff();
    p.row(s) = (-(dist.row(s).array() - dmin) / omega).exp();
    p.row(s) /= p.row(s).sum();
  }
  return p;
}

inline std::vector<int> pseudo_labels(const IsolationForest& forest,
                                      const Dataset& data, double tau) {
  check_dims(forest.dims, data.dims());
  std::vector<int> y(data.rows());
  for (std::size_t s = 0; s < y.size(); ++s)
    y[s] = classify(iforest_score(forest, data.row(s)), tau);
  return y;
}

/// D_s = y_s * ((1 - eps) * sum_k p_k(x_s) h_k(x_s) - gamma), so that
/// D_s + y_s * eps * (H w)_s = y_s * (E[h(x_s)] - gamma) for every w.
inline TrainingProblem assemble_problem(const ResponseTable& table,
                                        const Eigen::MatrixXd& softmax,
                                        std::span<const int> labels,
                                        double epsilon, double gamma,
                                        double lambda) {
  if (static_cast<Eigen::Index>(labels.size()) != table.h.rows())
    throw std::invalid_argument("assemble_problem: label count mismatch");
  if (softmax.rows() != table.h.rows() || softmax.cols() != table.h.cols())
    throw std::invalid_argument("assemble_problem: softmax shape mismatch");
  if (!(epsilon >= 0.0 && epsilon <= 1.0))
    throw std::invalid_argument("epsilon must lie in [0, 1]");
  if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be >= 0");
  TrainingProblem p;
  p.H = table.h;
  p.epsilon = epsilon;
  p.lambda = lambda;
  p.gamma = gamma;
  p.y.resize(table.h.rows());
  for (Eigen::Index s = 0; s < p.y.size(); ++s) {
    const int l = labels[static_cast<std::size_t>(s)];
    if (l != 1 && l != -1) throw std::invalid_argument("labels must be +-1");
    p.y(s) = l;
  }
  const Eigen::VectorXd soft = (softmax.array() * table.h.array()).rowwise().sum();
  p.D = p.y.array() * ((1.0 - epsilon) * soft.array() - gamma);
  return p;
}

inline TrainingProblem assemble_problem(const IsolationForest& forest,
                                        const Dataset& data,
                                        std::span<const int> labels,
                                        double epsilon, double omega,
                                        double tau, double lambda) {
  const ResponseTable table = response_table(forest, data);
  return assemble_problem(table, softmax_rows(table.dist, omega), labels,
                          epsilon, gamma_from_tau(tau, forest.c_psi), lambda);
}

inline Eigen::VectorXd hinge_margins(const TrainingProblem& p,
                                     const Eigen::VectorXd& w) {
  return p.D.array() + p.epsilon * p.y.array() * (p.H * w).array();
}

inline double hinge_objective(const TrainingProblem& p,
                              const Eigen::VectorXd& w) {
  if (w.size() != p.trees())
    throw std::invalid_argument("hinge_objective: w has wrong length");
  return hinge_margins(p, w).cwiseMax(0.0).sum() + p.lambda * w.squaredNorm();
}

/// A subgradient; the gradient wherever no margin is exactly zero.
inline Eigen::VectorXd hinge_subgradient(const TrainingProblem& p,
                                         const Eigen::VectorXd& w) {
  const Eigen::VectorXd m = hinge_margins(p, w);
  Eigen::VectorXd active = (m.array() > 0.0).cast<double>();
  return p.epsilon * p.H.transpose() * (active.array() * p.y.array()).matrix() +
         2.0 * p.lambda * w;
}

struct SolveResult {
  Eigen::VectorXd w;
  double objective = 0.0;
  int iterations = 0;
};

namespace detail {

inline Eigen::VectorXd to_simplex(const Eigen::VectorXd& w) {
  Eigen::VectorXd out = w.cwiseMax(0.0);
  const double s = out.sum();
  if (!(s > 0.0)) return Eigen::VectorXd::Constant(w.size(), 1.0 / w.size());
  return out / s;
}

inline double max_step(const Eigen::VectorXd& x, const Eigen::VectorXd& dx) {
  double a = 1.0;
  for (Eigen::Index i = 0; i < x.size(); ++i)
    if (dx(i) < 0.0) a = std::min(a, -x(i) / dx(i));
  return a;
}

}  // namespace detail

/// Mehrotra predictor-corrector interior-point method on the slack form
///
///   min  sum_s v_s + lambda |w|^2
///   s.t. v_s >= D_s + g_s^T w,  v >= 0,  w >= 0,  sum_k w_k = 1,
///
/// with g_s = y_s * eps * H_s. Every Newton step reduces to one T x T
/// Cholesky solve with the samples eliminated, so the cost per iteration
/// is O(n T^2). Handles lambda = 0 (the pure LP) the same way.
inline SolveResult solve(const TrainingProblem& prob, const FitConfig& cfg) {
  using Eigen::VectorXd;
  const Eigen::Index n = prob.samples();
  const Eigen::Index t = prob.trees();
  if (t < 1) throw std::invalid_argument("solve: problem has no trees");
  if (prob.D.size() != n || prob.y.size() != n)
    throw std::invalid_argument("solve: inconsistent problem dimensions");
  if (!prob.D.allFinite() || !prob.H.allFinite())
    throw std::invalid_argument("solve: non-finite problem data");

  if (t == 1 || n == 0) {
    VectorXd w = VectorXd::Constant(t, 1.0 / static_cast<double>(t));
    return {w, hinge_objective(prob, w), 0};
  }

  const Eigen::MatrixXd G = (prob.epsilon * prob.y).asDiagonal() * prob.H;
  const VectorXd& a = prob.D;
  const double two_lambda = 2.0 * prob.lambda;

  VectorXd w = VectorXd::Constant(t, 1.0 / static_cast<double>(t));
  VectorXd v = (a + G * w).cwiseMax(0.0).array() + 1.0;
  VectorXd r = v - G * w - a;
  VectorXd beta = VectorXd::Constant(n, 0.5);
  VectorXd mu = VectorXd::Constant(n, 0.5);
  VectorXd nu = VectorXd::Constant(t, 1.0);
  double zeta = 0.0;

  const double pairs = static_cast<double>(2 * n + t);
  const double scale = 1.0 + a.cwiseAbs().maxCoeff() + G.cwiseAbs().maxCoeff();
  const double feas_tol = 1e-9 * scale;

  VectorXd best_w = w;
  double best_obj = hinge_objective(prob, w);
  double residual = std::numeric_limits<double>::infinity();

  Eigen::LLT<Eigen::MatrixXd> llt;
  const VectorXd ones_t = VectorXd::Ones(t);

  for (int it = 1; it <= cfg.max_iters; ++it) {
    const VectorXd r_dw = two_lambda * w + G.transpose() * beta - nu -
                          zeta * ones_t;
    const VectorXd r_dv = VectorXd::Ones(n) - beta - mu;
    const VectorXd r_p = v - G * w - a - r;
    const double r_eq = w.sum() - 1.0;
    const double gap = r.dot(beta) + v.dot(mu) + w.dot(nu);
    const double primal = v.sum() + prob.lambda * w.squaredNorm();

    residual = std::max({r_dw.lpNorm<Eigen::Infinity>(),
                         r_dv.lpNorm<Eigen::Infinity>(),
                         r_p.lpNorm<Eigen::Infinity>(), std::abs(r_eq)});
    const VectorXd ws = detail::to_simplex(w);
    const double obj = hinge_objective(prob, ws);
    if (obj < best_obj) {
      best_obj = obj;
      best_w = ws;
    }
    if (residual <= feas_tol &&
        gap <= 1e-2 * cfg.solver_tol * std::max(1.0, std::abs(primal))) {
      return {best_w, best_obj, it - 1};
    }

    // Per-sample elimination weight mu*beta / (v*beta + r*mu). Written
    // without dividing by v or r, which both approach zero.
    const VectorXd k = 1.0 / (v.array() / mu.array() + r.array() / beta.array());
    Eigen::MatrixXd M = (k.array().sqrt().matrix().asDiagonal() * G).eval();
    M = (M.transpose() * M).eval();
    M.diagonal().array() += two_lambda + nu.array() / w.array();
    llt.compute(M);
    if (llt.info() != Eigen::Success) {
      M.diagonal().array() += 1e-12 * M.diagonal().maxCoeff();
      llt.compute(M);
    }
    const VectorXd z = llt.solve(ones_t);
    const double one_z = z.sum();

    struct Step {
      VectorXd dw, dv, dr, dbeta, dmu, dnu;
      double dzeta;
    };
    auto newton = [&](const VectorXd& rc1, const VectorXd& rc2,
                      const VectorXd& rc3) {
      Step s;
      const VectorXd q = (rc2.array() + v.array() * r_dv.array()) / mu.array() -
                         rc1.array() / beta.array();
      const VectorXd b = -r_dw -
                         G.transpose() * (k.array() * (q - r_p).array()).matrix() -
                         (rc3.array() / w.array()).matrix();
      const VectorXd u = llt.solve(b);
      s.dzeta = (-r_eq - u.sum()) / one_z;
      s.dw = u + s.dzeta * z;
      const VectorXd rho = G * s.dw - r_p;
      s.dbeta = k.array() * (rho + q).array();
      s.dmu = r_dv - s.dbeta;
      s.dr = -(rc1.array() + r.array() * s.dbeta.array()) / beta.array();
      s.dv = s.dr + rho;
      s.dnu = -(rc3.array() + nu.array() * s.dw.array()) / w.array();
      return s;
    };
    auto step_length = [&](const Step& s) {
      return std::min({detail::max_step(r, s.dr), detail::max_step(beta, s.dbeta),
                       detail::max_step(v, s.dv), detail::max_step(mu, s.dmu),
                       detail::max_step(w, s.dw), detail::max_step(nu, s.dnu)});
    };

    const VectorXd c1 = r.cwiseProduct(beta);
    const VectorXd c2 = v.cwiseProduct(mu);
    const VectorXd c3 = w.cwiseProduct(nu);
    const Step aff = newton(c1, c2, c3);
    const double a_aff = step_length(aff);
    const double gap_aff =
        (r + a_aff * aff.dr).dot(beta + a_aff * aff.dbeta) +
        (v + a_aff * aff.dv).dot(mu + a_aff * aff.dmu) +
        (w + a_aff * aff.dw).dot(nu + a_aff * aff.dnu);
    const double sigma = std::pow(std::max(0.0, gap_aff) / gap, 3.0);
    const double target = sigma * gap / pairs;

    const Step s = newton(
        (c1 + aff.dr.cwiseProduct(aff.dbeta)).array() - target,
        (c2 + aff.dv.cwiseProduct(aff.dmu)).array() - target,
        (c3 + aff.dw.cwiseProduct(aff.dnu)).array() - target);
    const double alpha = std::min(1.0, 0.995 * step_length(s));

    w += alpha * s.dw;
    v += alpha * s.dv;
    r += alpha * s.dr;
    beta += alpha * s.dbeta;
    mu += alpha * s.dmu;
    nu += alpha * s.dnu;
    zeta += alpha * s.dzeta;
  }

  std::vector<double> bw(best_w.data(), best_w.data() + best_w.size());
  throw ConvergenceError("solver did not converge in " +
                             std::to_string(cfg.max_iters) + " iterations",
                         std::move(bw), best_obj, residual, cfg.max_iters);
}

struct FitResult {
  AttentionModel model;
  double objective = 0.0;
  int iterations = 0;
};

/// Trains the contamination weights w from a precomputed response table.
inline FitResult fit(const ResponseTable& table, double c_psi,
                     std::span<const int> labels, const FitConfig& cfg) {
  validate(cfg);
  FitResult out;
  out.model.epsilon = cfg.epsilon;
  out.model.omega = cfg.omega;
  out.model.tau = cfg.tau;
  out.model.gamma = gamma_from_tau(cfg.tau, c_psi);
  const auto t = static_cast<std::size_t>(table.h.cols());
  if (cfg.epsilon == 0.0) {
    // The loss does not depend on w; uniform also minimizes |w|^2.
    out.model.w = uniform_weights(t);
    return out;
  }
  const TrainingProblem prob =
      assemble_problem(table, softmax_rows(table.dist, cfg.omega), labels,
                       cfg.epsilon, out.model.gamma, cfg.lambda);
  const SolveResult res = solve(prob, cfg);
  out.model.w.assign(res.w.data(), res.w.data() + res.w.size());
  out.objective = res.objective;
  out.iterations = res.iterations;
  return out;
}

inline FitResult fit(const IsolationForest& forest, const Dataset& data,
                     const FitConfig& cfg) {
  validate(cfg);
  std::vector<int> labels;
  if (cfg.label_source == LabelSource::kPseudo) {
    labels = pseudo_labels(forest, data, cfg.tau);
  } else {
    if (!data.labels)
      throw std::invalid_argument(
          "fit: dataset has no labels; use pseudo labels");
    labels = *data.labels;
  }
  return fit(response_table(forest, data), forest.c_psi, labels, cfg);
}

inline nlohmann::json to_json(const TrainingProblem& p) {
  nlohmann::json h = nlohmann::json::array();
  for (Eigen::Index s = 0; s < p.H.rows(); ++s) {
    std::vector<double> row(static_cast<std::size_t>(p.H.cols()));
    for (Eigen::Index k = 0; k < p.H.cols(); ++k)
      row[static_cast<std::size_t>(k)] = p.H(s, k);
    h.push_back(std::move(row));
  }
  return {{"H", std::move(h)},
          {"D", std::vector<double>(p.D.data(), p.D.data() + p.D.size())},
          {"y", std::vector<double>(p.y.data(), p.y.data() + p.y.size())},
          {"epsilon", p.epsilon},
          {"lambda", p.lambda},
          {"gamma", p.gamma}};
}

}  // namespace abif
