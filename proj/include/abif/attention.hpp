#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "abif/forest.hpp"

namespace abif {

/// Path-length threshold matching score threshold tau:
/// E <= gamma  <=>  2^(-E/c) >= tau.
inline double gamma_from_tau(double tau, double c_psi) {
  if (!(tau > 0.0 && tau < 1.0))
    throw std::invalid_argument("tau must lie in (0, 1)");
  if (!(c_psi > 0.0)) throw std::invalid_argument("c_psi must be positive");
  return -c_psi * std::log2(tau);
}

/// What one tree reports for a query: its path length (the value), the
/// centroid of the leaf the query landed in (the key) and the squared
/// Euclidean distance between query and key.
struct TreeResponse {
  double h = 0.0;
  std::span<const double> key;
  double key_distance = 0.0;
};

inline double squared_distance(std::span<const double> a,
                               std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

/// Keys point into `forest`, which must outlive the result.
inline std::vector<TreeResponse> tree_responses(const IsolationForest& forest,
                                                std::span<const double> x) {
  check_dims(forest.dims, x.size());
  std::vector<TreeResponse> out;
  out.reserve(forest.size());
  for (const auto& tree : forest.trees) {
    const Leaf& leaf = tree.leaf_for(x);
    out.push_back({static_cast<double>(leaf.depth) + c_factor(leaf.size),
                   leaf.centroid, squared_distance(x, leaf.centroid)});
  }
  return out;
}

/// softmax(-d / omega), shifted by the smallest distance before
/// exponentiating so the largest term is exactly exp(0).
inline std::vector<double> softmax_weights(std::span<const double> distances,
                                           double omega) {
  if (!(omega > 0.0)) throw std::invalid_argument("omega must be positive");
  if (distances.empty()) return {};
  const double dmin = *std::min_element(distances.begin(), distances.end());
  std::vector<double> p(distances.size());
  double z = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    p[k] = std::exp(-(distances[k] - dmin) / omega);
    z += p[k];
  }
  for (double& v : p) v /= z;
  return p;
}

inline std::vector<double> softmax_weights(
    std::span<const TreeResponse> responses, double omega) {
  std::vector<double> d(responses.size());
  for (std::size_t k = 0; k < d.size(); ++k) d[k] = responses[k].key_distance;
  return softmax_weights(d, omega);
}

inline bool on_simplex(std::span<const double> v, double tol) {
  double sum = 0.0;
  for (double x : v) {
    if (!(x >= -tol)) return false;
    sum += x;
  }
  return std::abs(sum - 1.0) <= tol;
}

/// Huber contamination mix (1 - eps) * P + eps * w.
inline std::vector<double> attention_weights(std::span<const double> p,
                                             std::span<const double> w,
                                             double epsilon) {
  if (p.size() != w.size())
    throw std::invalid_argument("attention_weights: P and w differ in length");
  if (!(epsilon >= 0.0 && epsilon <= 1.0))
    throw std::invalid_argument("epsilon must lie in [0, 1]");
  if (!on_simplex(p, 1e-6))
    throw std::invalid_argument("attention_weights: P is not on the simplex");
  if (!on_simplex(w, 1e-6))
    throw std::invalid_argument("attention_weights: w is not on the simplex");
  std::vector<double> alpha(p.size());
  for (std::size_t k = 0; k < p.size(); ++k)
    alpha[k] = (1.0 - epsilon) * p[k] + epsilon * w[k];
  return alpha;
}

struct AttentionModel {
  double epsilon = 0.5;
  double omega = 20.0;
  double tau = 0.5;
  double gamma = 0.0;
  std::vector<double> w;

  std::size_t trees() const { return w.size(); }
};

inline std::vector<double> uniform_weights(std::size_t t) {
  return std::vector<double>(t, 1.0 / static_cast<double>(t));
}

inline void check_model(const IsolationForest& forest,
                        const AttentionModel& model) {
  if (model.trees() != forest.size())
    throw std::invalid_argument(
        "attention model has " + std::to_string(model.trees()) +
        " weights but forest has " + std::to_string(forest.size()) + " trees");
}

/// alpha_k(x) for every tree, plus the responses they were built from.
struct Attended {
  std::vector<TreeResponse> responses;
  std::vector<double> alpha;
  double expected_path = 0.0;
};

inline Attended attend(const IsolationForest& forest,
                       const AttentionModel& model, std::span<const double> x) {
  check_model(forest, model);
  Attended a;
  a.responses = tree_responses(forest, x);
  a.alpha = attention_weights(softmax_weights(a.responses, model.omega),
                              model.w, model.epsilon);
  for (std::size_t k = 0; k < a.alpha.size(); ++k)
    a.expected_path += a.alpha[k] * a.responses[k].h;
  return a;
}

inline double attended_path_length(const IsolationForest& forest,
                                   const AttentionModel& model,
                                   std::span<const double> x) {
  return attend(forest, model, x).expected_path;
}

struct ScoredInstance {
  double score = 0.0;
  int label = kNormal;
};

inline ScoredInstance abif_score(const IsolationForest& forest,
                                 const AttentionModel& model,
                                 std::span<const double> x) {
  const double s = anomaly_score(attended_path_length(forest, model, x),
                                 forest.c_psi);
  return {s, classify(s, model.tau)};
}

struct TreeAttention {
  std::size_t tree = 0;
  double alpha = 0.0;
  double h = 0.0;
};

/// The top_m trees by attention weight; equal weights keep tree order.
inline std::vector<TreeAttention> explain(const IsolationForest& forest,
                                          const AttentionModel& model,
                                          std::span<const double> x,
                                          std::size_t top_m) {
  if (top_m < 1 || top_m > forest.size())
    throw std::invalid_argument("explain: top_m must be in [1, " +
                                std::to_string(forest.size()) + "]");
  const Attended a = attend(forest, model, x);
  std::vector<TreeAttention> all(a.alpha.size());
  for (std::size_t k = 0; k < all.size(); ++k)
    all[k] = {k, a.alpha[k], a.responses[k].h};
  std::stable_sort(all.begin(), all.end(),
                   [](const TreeAttention& l, const TreeAttention& r) {
                     return l.alpha > r.alpha;
                   });
  all.resize(top_m);
  return all;
}

inline nlohmann::json to_json(const AttentionModel& m) {
  return {{"epsilon", m.epsilon},
          {"omega", m.omega},
          {"tau", m.tau},
          {"gamma", m.gamma},
          {"w", m.w}};
}

/// Rejects weights off the simplex and a gamma that disagrees with tau.
inline AttentionModel attention_from_json(const nlohmann::json& j,
                                          const IsolationForest& forest) {
  AttentionModel m;
  m.epsilon = j.at("epsilon").get<double>();
  m.omega = j.at("omega").get<double>();
  m.tau = j.at("tau").get<double>();
  m.gamma = j.at("gamma").get<double>();
  m.w = j.at("w").get<std::vector<double>>();
  if (!(m.epsilon >= 0.0 && m.epsilon <= 1.0))
    throw std::invalid_argument("model json: epsilon outside [0, 1]");
  if (!(m.omega > 0.0))
    throw std::invalid_argument("model json: omega must be positive");
  if (!on_simplex(m.w, 1e-9))
    throw std::invalid_argument("model json: w is not on the simplex");
  check_model(forest, m);
  const double g = gamma_from_tau(m.tau, forest.c_psi);
  if (std::abs(g - m.gamma) > 1e-9 * std::max(1.0, std::abs(g)))
    throw std::invalid_argument("model json: gamma inconsistent with tau");
  return m;
}

}  // namespace abif
