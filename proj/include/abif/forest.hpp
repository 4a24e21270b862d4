#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <thread>
#include <variant>
#include <vector>

#include "abif/dataset.hpp"

namespace abif {

// Largest m for which harmonic() sums exactly. Above it, ln(m) + gamma is
// within 1/(2m) < 0.005 of the true value.
inline constexpr std::uint64_t kExactHarmonicLimit = 100;

inline double harmonic(std::uint64_t m) {
  if (m == 0) throw std::invalid_argument("harmonic: m must be >= 1");
  if (m <= kExactHarmonicLimit) {
    double h = 0.0;
    for (std::uint64_t i = 1; i <= m; ++i) h += 1.0 / static_cast<double>(i);
    return h;
  }
  return std::log(static_cast<double>(m)) + std::numbers::egamma;
}

/// Average path length of an unsuccessful BST search over m points.
inline double c_factor(std::uint64_t m) {
  if (m <= 1) return 0.0;
  const double md = static_cast<double>(m);
  return 2.0 * harmonic(m - 1) - 2.0 * (md - 1.0) / md;
}

/// 2^(-E / c_psi). Larger means more anomalous.
inline double anomaly_score(double expected_path, double c_psi) {
  if (!(c_psi > 0.0))
    throw std::invalid_argument("anomaly_score: c_psi must be positive");
  return std::exp2(-expected_path / c_psi);
}

/// +1 when the score is strictly above tau. A score equal to tau is normal.
inline int classify(double score, double tau) {
  return score > tau ? kAnomaly : kNormal;
}

struct Split {
  std::size_t feature = 0;
  double value = 0.0;
  std::uint32_t left = 0;
  std::uint32_t right = 0;
};

struct Leaf {
  std::size_t size = 0;
  int depth = 0;
  std::vector<double> centroid;
};

using TreeNode = std::variant<Split, Leaf>;

/// Nodes are stored flat; index 0 is the root.
class IsolationTree {
 public:
  IsolationTree() = default;
  IsolationTree(std::vector<TreeNode> nodes, std::size_t dims)
      : nodes_(std::move(nodes)), dims_(dims) {}

  const std::vector<TreeNode>& nodes() const { return nodes_; }
  std::size_t dims() const { return dims_; }

  const Leaf& leaf_for(std::span<const double> x) const {
    check_dims(dims_, x.size());
    std::uint32_t i = 0;
    for (;;) {
      const TreeNode& node = nodes_[i];
      if (const auto* s = std::get_if<Split>(&node))
        i = x[s->feature] <= s->value ? s->left : s->right;
      else
        return std::get<Leaf>(node);
    }
  }

  /// Edges to the leaf plus c(leaf size) for the subtree that was cut off.
  double path_length(std::span<const double> x) const {
    const Leaf& leaf = leaf_for(x);
    return static_cast<double>(leaf.depth) + c_factor(leaf.size);
  }

  std::vector<const Leaf*> leaves() const {
    std::vector<const Leaf*> out;
    for (const auto& n : nodes_)
      if (const auto* l = std::get_if<Leaf>(&n)) out.push_back(l);
    return out;
  }

 private:
  std::vector<TreeNode> nodes_;
  std::size_t dims_ = 0;
};

namespace detail {

template <class Rng>
class TreeBuilder {
 public:
  TreeBuilder(const RowMatrix& x, int height_limit, Rng& rng)
      : x_(x), height_limit_(height_limit), rng_(rng),
        dims_(static_cast<std::size_t>(x.cols())) {}

  IsolationTree build(std::vector<std::size_t> rows) {
    nodes_.clear();
    grow(rows, 0, rows.size(), 0);
    return IsolationTree(std::move(nodes_), dims_);
  }

 private:
  double at(std::size_t r, std::size_t q) const {
    return x_(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(q));
  }

  std::uint32_t make_leaf(const std::vector<std::size_t>& rows,
                          std::size_t begin, std::size_t end, int depth) {
    Leaf leaf;
    leaf.size = end - begin;
    leaf.depth = depth;
    leaf.centroid.assign(dims_, 0.0);
    for (std::size_t i = begin; i < end; ++i)
      for (std::size_t q = 0; q < dims_; ++q) leaf.centroid[q] += at(rows[i], q);
    for (double& c : leaf.centroid) c /= static_cast<double>(leaf.size);
    nodes_.emplace_back(std::move(leaf));
    return static_cast<std::uint32_t>(nodes_.size() - 1);
  }

  std::uint32_t grow(std::vector<std::size_t>& rows, std::size_t begin,
                     std::size_t end, int depth) {
    if (end - begin <= 1 || depth >= height_limit_)
      return make_leaf(rows, begin, end, depth);

    // Features that still vary over this node. A uniform pick among them is
    // the same distribution as redrawing constant features until one varies.
    std::vector<std::size_t> usable;
    lo_.assign(dims_, 0.0);
    hi_.assign(dims_, 0.0);
    for (std::size_t q = 0; q < dims_; ++q) {
      double lo = at(rows[begin], q), hi = lo;
      for (std::size_t i = begin + 1; i < end; ++i) {
        const double v = at(rows[i], q);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      lo_[q] = lo;
      hi_[q] = hi;
      if (hi > lo) usable.push_back(q);
    }
    if (usable.empty()) return make_leaf(rows, begin, end, depth);

    std::uniform_int_distribution<std::size_t> pick(0, usable.size() - 1);
    const std::size_t q = usable[pick(rng_)];
    std::uniform_real_distribution<double> draw(lo_[q], hi_[q]);
    double p = draw(rng_);
    while (p >= hi_[q]) p = draw(rng_);

    auto mid_it = std::partition(
        rows.begin() + static_cast<std::ptrdiff_t>(begin),
        rows.begin() + static_cast<std::ptrdiff_t>(end),
        [&](std::size_t r) { return at(r, q) <= p; });
    const auto mid = static_cast<std::size_t>(mid_it - rows.begin());

    const auto self = static_cast<std::uint32_t>(nodes_.size());
    nodes_.emplace_back(Split{q, p, 0, 0});
    const std::uint32_t left = grow(rows, begin, mid, depth + 1);
    const std::uint32_t right = grow(rows, mid, end, depth + 1);
    auto& s = std::get<Split>(nodes_[self]);
    s.left = left;
    s.right = right;
    return self;
  }

  const RowMatrix& x_;
  int height_limit_;
  Rng& rng_;
  std::size_t dims_;
  std::vector<TreeNode> nodes_;
  std::vector<double> lo_, hi_;
};

}  // namespace detail

/// Builds one isolation tree over the given rows of `x`.
template <class Rng>
IsolationTree build_tree(const RowMatrix& x, std::span<const std::size_t> rows,
                         int height_limit, Rng& rng) {
  if (rows.empty()) throw std::invalid_argument("build_tree: empty subsample");
  if (height_limit < 0)
    throw std::invalid_argument("build_tree: height_limit must be >= 0");
  detail::TreeBuilder<Rng> builder(x, height_limit, rng);
  return builder.build({rows.begin(), rows.end()});
}

template <class Rng>
IsolationTree build_tree(const RowMatrix& x, int height_limit, Rng& rng) {
  std::vector<std::size_t> rows(static_cast<std::size_t>(x.rows()));
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return build_tree(x, rows, height_limit, rng);
}

inline std::size_t default_subsample(std::size_t n) {
  return std::min<std::size_t>(n, 256);
}

inline int default_height_limit(std::size_t psi) {
  return static_cast<int>(std::ceil(std::log2(static_cast<double>(psi))));
}

struct ForestOptions {
  std::size_t trees = 150;
  std::size_t subsample = 0;  // 0: min(n, 256)
  int height_limit = -1;      // <0: ceil(log2(subsample))
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

struct IsolationForest {
  std::vector<IsolationTree> trees;
  std::size_t psi = 0;
  int height_limit = 0;
  double c_psi = 0.0;
  std::uint64_t seed = 0;
  std::size_t dims = 0;

  std::size_t size() const { return trees.size(); }
};

/// Per-tree generator; depends only on (seed, tree index) so that any
/// thread count yields the same forest.
inline std::mt19937_64 tree_rng(std::uint64_t seed, std::size_t tree) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tree),
                    static_cast<std::uint32_t>(tree >> 32)};
  return std::mt19937_64(seq);
}

inline IsolationTree build_forest_tree(const RowMatrix& x, std::size_t psi,
                                       int height_limit, std::uint64_t seed,
                                       std::size_t tree) {
  auto rng = tree_rng(seed, tree);
  const auto n = static_cast<std::size_t>(x.rows());
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < psi; ++i) {
    std::uniform_int_distribution<std::size_t> d(i, n - 1);
    std::swap(idx[i], idx[d(rng)]);
  }
  idx.resize(psi);
  return build_tree(x, idx, height_limit, rng);
}

inline IsolationForest build_forest(const Dataset& data,
                                    const ForestOptions& opts) {
  validate(data);
  const std::size_t n = data.rows();
  if (opts.trees < 1) throw std::invalid_argument("build_forest: T must be >= 1");
  const std::size_t psi = opts.subsample ? opts.subsample : default_subsample(n);
  if (psi > n)
    throw std::invalid_argument("build_forest: psi=" + std::to_string(psi) +
                                " exceeds n=" + std::to_string(n));
  if (psi < 2) throw std::invalid_argument("build_forest: psi must be >= 2");

  IsolationForest forest;
  forest.psi = psi;
  forest.height_limit =
      opts.height_limit < 0 ? default_height_limit(psi) : opts.height_limit;
  forest.c_psi = c_factor(psi);
  forest.seed = opts.seed;
  forest.dims = data.dims();
  forest.trees.resize(opts.trees);

  const unsigned workers =
      std::max(1u, std::min<unsigned>(opts.threads,
                                      static_cast<unsigned>(opts.trees)));
  auto work = [&](unsigned w) {
    for (std::size_t k = w; k < opts.trees; k += workers)
      forest.trees[k] = build_forest_tree(data.features, psi,
                                          forest.height_limit, opts.seed, k);
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work, w);
  }
  return forest;
}

inline double path_length(const IsolationTree& tree, std::span<const double> x) {
  return tree.path_length(x);
}

/// Plain iForest expected path length: the unweighted mean over trees.
inline double mean_path_length(const IsolationForest& forest,
                               std::span<const double> x) {
  check_dims(forest.dims, x.size());
  double sum = 0.0;
  for (const auto& t : forest.trees) sum += t.path_length(x);
  return sum / static_cast<double>(forest.trees.size());
}

inline double iforest_score(const IsolationForest& forest,
                            std::span<const double> x) {
  return anomaly_score(mean_path_length(forest, x), forest.c_psi);
}

}  // namespace abif
