#pragma once

#include <stdexcept>
#include <string>

#include <json.hpp>

#include "abif/forest.hpp"

namespace abif {

// JSON layout:
//   {"seed", "psi", "height_limit", "dims",
//    "trees": [node, ...]}
// where node is {"q", "p", "left", "right"} or {"size", "depth", "centroid"}.
// nlohmann emits the shortest decimal that round-trips each double, so
// split values and centroids reload bit-identical.

namespace detail {

inline nlohmann::json node_to_json(const IsolationTree& tree, std::uint32_t i) {
  const TreeNode& node = tree.nodes()[i];
  if (const auto* s = std::get_if<Split>(&node)) {
    return {{"q", s->feature},
            {"p", s->value},
            {"left", node_to_json(tree, s->left)},
            {"right", node_to_json(tree, s->right)}};
  }
  const auto& leaf = std::get<Leaf>(node);
  return {{"size", leaf.size}, {"depth", leaf.depth}, {"centroid", leaf.centroid}};
}

inline std::uint32_t node_from_json(const nlohmann::json& j, std::size_t dims,
                                    std::vector<TreeNode>& nodes) {
  const auto self = static_cast<std::uint32_t>(nodes.size());
  if (j.contains("q")) {
    Split s{j.at("q").get<std::size_t>(), j.at("p").get<double>(), 0, 0};
    if (s.feature >= dims)
      throw std::invalid_argument("forest json: split feature out of range");
    nodes.emplace_back(s);
    const auto left = node_from_json(j.at("left"), dims, nodes);
    const auto right = node_from_json(j.at("right"), dims, nodes);
    auto& ref = std::get<Split>(nodes[self]);
    ref.left = left;
    ref.right = right;
    return self;
  }
  Leaf leaf{j.at("size").get<std::size_t>(), j.at("depth").get<int>(),
            j.at("centroid").get<std::vector<double>>()};
  if (leaf.size < 1)
    throw std::invalid_argument("forest json: leaf size must be >= 1");
  if (leaf.centroid.size() != dims)
    throw std::invalid_argument("forest json: centroid has wrong dimension");
  nodes.emplace_back(std::move(leaf));
  return self;
}

}  // namespace detail

inline nlohmann::json to_json(const IsolationForest& forest) {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : forest.trees) trees.push_back(detail::node_to_json(t, 0));
  return {{"seed", forest.seed},
          {"psi", forest.psi},
          {"height_limit", forest.height_limit},
          {"dims", forest.dims},
          {"trees", std::move(trees)}};
}

inline IsolationForest forest_from_json(const nlohmann::json& j) {
  IsolationForest f;
  f.seed = j.at("seed").get<std::uint64_t>();
  f.psi = j.at("psi").get<std::size_t>();
  f.height_limit = j.at("height_limit").get<int>();
  f.dims = j.at("dims").get<std::size_t>();
  if (f.psi < 2) throw std::invalid_argument("forest json: psi must be >= 2");
  f.c_psi = c_factor(f.psi);
  for (const auto& jt : j.at("trees")) {
    std::vector<TreeNode> nodes;
    detail::node_from_json(jt, f.dims, nodes);
    f.trees.emplace_back(std::move(nodes), f.dims);
  }
  if (f.trees.empty()) throw std::invalid_argument("forest json: no trees");
  return f;
}

}  // namespace abif
