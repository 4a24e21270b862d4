#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace abif {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr int kAnomaly = 1;
inline constexpr int kNormal = -1;

/// n x d feature matrix with optional labels (+1 anomalous, -1 normal).
struct Dataset {
  RowMatrix features;
  std::optional<std::vector<int>> labels;
  std::vector<std::string> feature_names;

  std::size_t rows() const { return static_cast<std::size_t>(features.rows()); }
  std::size_t dims() const { return static_cast<std::size_t>(features.cols()); }

  std::span<const double> row(std::size_t i) const {
    return {features.data() + i * dims(), dims()};
  }

  bool has_labels() const { return labels.has_value(); }

  std::size_t count_label(int value) const {
    if (!labels) return 0;
    std::size_t c = 0;
    for (int y : *labels) c += (y == value);
    return c;
  }

  /// Rows selected by index, in the given order.
  Dataset select(std::span<const std::size_t> idx) const {
    Dataset out;
    out.features.resize(static_cast<Eigen::Index>(idx.size()), features.cols());
    for (std::size_t i = 0; i < idx.size(); ++i)
      out.features.row(static_cast<Eigen::Index>(i)) =
          features.row(static_cast<Eigen::Index>(idx[i]));
    if (labels) {
      std::vector<int> y(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) y[i] = (*labels)[idx[i]];
      out.labels = std::move(y);
    }
    out.feature_names = feature_names;
    return out;
  }
};

/// Throws std::invalid_argument unless every dataset invariant holds.
inline void validate(const Dataset& data) {
  if (data.rows() < 1) throw std::invalid_argument("dataset has no rows");
  if (data.dims() < 1) throw std::invalid_argument("dataset has no features");
  if (!data.features.allFinite())
    throw std::invalid_argument("dataset contains non-finite feature values");
  if (data.labels) {
    if (data.labels->size() != data.rows())
      throw std::invalid_argument("label count does not match row count");
    for (int y : *data.labels)
      if (y != 1 && y != -1)
        throw std::invalid_argument("labels must be -1 or +1");
  }
  if (!data.feature_names.empty() && data.feature_names.size() != data.dims())
    throw std::invalid_argument("feature name count does not match columns");
}

inline void check_dims(std::size_t expected, std::size_t actual) {
  if (expected != actual)
    throw std::invalid_argument("dimension mismatch: expected d=" +
                                std::to_string(expected) +
                                ", got d=" + std::to_string(actual));
}

}  // namespace abif
