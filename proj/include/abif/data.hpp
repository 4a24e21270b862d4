#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "abif/dataset.hpp"
#include "abif/errors.hpp"

namespace abif {

// Circle geometry: normals on the inner circle, anomalies on the outer one.
// The rings are close enough (ratio about 1.3) that plain iForest with
// T=150, tau=0.5 misclassifies part of the outer ring, scoring an F1 near
// 0.92. The absolute scale sets how sharply an omega in [10, 40]
// discriminates between leaves.
inline constexpr double kCircleNormalRadius = 30.0;
inline constexpr double kCircleAnomalyRadius = 39.2;

// Normal dataset: two Gaussian clusters whose tails reach into the
// anomaly box [-1,1]^2.
inline constexpr double kNormalClusterCenter = 2.0;
inline constexpr double kNormalClusterSd = 0.7;
inline constexpr double kNormalAnomalyHalfWidth = 1.0;

namespace detail {

inline Dataset make_2d(std::size_t n, std::vector<int> labels) {
  Dataset d;
  d.features.resize(static_cast<Eigen::Index>(n), 2);
  d.labels = std::move(labels);
  d.feature_names = {"x0", "x1"};
  return d;
}

inline void check_counts(std::size_t n_norm, std::size_t n_anom) {
  if (n_norm + n_anom == 0)
    throw std::invalid_argument("generator: both class counts are zero");
}

}  // namespace detail

/// Normals first, then anomalies.
inline Dataset gen_circle(std::size_t n_norm, std::size_t n_anom,
                          double noise_sd, std::uint64_t seed) {
  detail::check_counts(n_norm, n_anom);
  if (!(noise_sd >= 0.0)) throw std::invalid_argument("noise_sd must be >= 0");
  std::vector<int> y(n_norm, kNormal);
  y.resize(n_norm + n_anom, kAnomaly);
  Dataset d = detail::make_2d(n_norm + n_anom, std::move(y));

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t i = 0; i < n_norm + n_anom; ++i) {
    const double radius = i < n_norm ? kCircleNormalRadius : kCircleAnomalyRadius;
    const double a = angle(rng);
    const double ex = noise(rng), ey = noise(rng);
    const auto r = static_cast<Eigen::Index>(i);
    d.features(r, 0) = radius * std::cos(a) + noise_sd * ex;
    d.features(r, 1) = radius * std::sin(a) + noise_sd * ey;
  }
  return d;
}

/// Normals alternate between the clusters at (-2,-2) and (2,2), standard
/// deviation kNormalClusterSd per coordinate; anomalies are uniform on
/// [-1,1]^2.
inline Dataset gen_normal(std::size_t n_norm, std::size_t n_anom,
                          std::uint64_t seed) {
  detail::check_counts(n_norm, n_anom);
  std::vector<int> y(n_norm, kNormal);
  y.resize(n_norm + n_anom, kAnomaly);
  Dataset d = detail::make_2d(n_norm + n_anom, std::move(y));

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, kNormalClusterSd);
  std::uniform_real_distribution<double> box(-kNormalAnomalyHalfWidth,
                                             kNormalAnomalyHalfWidth);
  for (std::size_t i = 0; i < n_norm; ++i) {
    const double c = (i % 2 == 0) ? -kNormalClusterCenter : kNormalClusterCenter;
    const auto r = static_cast<Eigen::Index>(i);
    d.features(r, 0) = c + gauss(rng);
    d.features(r, 1) = c + gauss(rng);
  }
  for (std::size_t i = n_norm; i < n_norm + n_anom; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    d.features(r, 0) = box(rng);
    d.features(r, 1) = box(rng);
  }
  return d;
}

struct CsvOptions {
  std::string label_column = "label";  // empty: no label column
  std::string positive_label = "1";
  char delimiter = ',';
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"')
    s = s.substr(1, s.size() - 2);
  return s;
}

inline std::vector<std::string_view> split_line(std::string_view line,
                                                char delim) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(delim, start);
    out.push_back(trim(line.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline bool skip_line(std::string_view line) {
  const auto t = trim(line);
  return t.empty() || t.front() == '#';
}

}  // namespace detail

/// Reads a headed CSV. Every column except the label column must be
/// numeric; lines starting with '#' are ignored.
inline Dataset read_csv(std::istream& in, const CsvOptions& opt,
                        const std::string& source = "<stream>") {
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (!have_header && std::getline(in, line)) {
    ++line_no;
    have_header = !detail::skip_line(line);
  }
  if (!have_header) throw IngestionError(source + ": empty file");

  std::vector<std::string> header;
  for (auto f : detail::split_line(line, opt.delimiter)) header.emplace_back(f);
  std::ptrdiff_t label_idx = -1;
  if (!opt.label_column.empty()) {
    auto it = std::find(header.begin(), header.end(), opt.label_column);
    if (it == header.end())
      throw IngestionError(source + ": missing label column '" +
                               opt.label_column + "'",
                           0, opt.label_column);
    label_idx = it - header.begin();
  }

  Dataset d;
  for (std::size_t c = 0; c < header.size(); ++c)
    if (static_cast<std::ptrdiff_t>(c) != label_idx)
      d.feature_names.push_back(header[c]);
  const std::size_t dims = d.feature_names.size();
  if (dims == 0) throw IngestionError(source + ": no feature columns");

  std::vector<double> values;
  std::vector<int> labels;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::skip_line(line)) continue;
    ++row;
    const auto fields = detail::split_line(line, opt.delimiter);
    if (fields.size() != header.size())
      throw IngestionError(source + ": row " + std::to_string(row) + " (line " +
                               std::to_string(line_no) + ") has " +
                               std::to_string(fields.size()) +
                               " fields, expected " +
                               std::to_string(header.size()),
                           row);
    for (std::size_t c = 0; c < fields.size(); ++c) {
      const auto f = fields[c];
      if (static_cast<std::ptrdiff_t>(c) == label_idx) {
        if (f.empty())
          throw IngestionError(source + ": row " + std::to_string(row) +
                                   ", column '" + header[c] + "': missing label",
                               row, header[c]);
        labels.push_back(f == opt.positive_label ? kAnomaly : kNormal);
        continue;
      }
      double v = 0.0;
      const char* first = f.data();
      const char* last = f.data() + f.size();
      if (!f.empty() && *first == '+') ++first;
      const auto [ptr, ec] = std::from_chars(first, last, v);
      if (f.empty() || ec != std::errc() || ptr != last || !std::isfinite(v))
        throw IngestionError(source + ": row " + std::to_string(row) +
                                 ", column '" + header[c] + "': " +
                                 (f.empty() ? std::string("missing value")
                                            : "non-numeric value '" +
                                                  std::string(f) + "'"),
                             row, header[c]);
      values.push_back(v);
    }
  }
  if (row == 0) throw IngestionError(source + ": no data rows");

  d.features = Eigen::Map<const RowMatrix>(
      values.data(), static_cast<Eigen::Index>(row),
      static_cast<Eigen::Index>(dims));
  if (label_idx >= 0) d.labels = std::move(labels);
  return d;
}

inline Dataset load_csv(const std::string& path, const CsvOptions& opt) {
  std::ifstream in(path);
  if (!in) throw IngestionError(path + ": cannot open file");
  return read_csv(in, opt, path);
}

inline Dataset load_csv(const std::string& path,
                        const std::string& label_column,
                        const std::string& positive_label) {
  return load_csv(path, CsvOptions{label_column, positive_label, ','});
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Writes a headed CSV with the label (when present) as the last column,
/// +1 for anomalies and -1 otherwise.
inline void write_csv(std::ostream& out, const Dataset& d,
                      const std::string& label_column = "label") {
  for (std::size_t c = 0; c < d.dims(); ++c) {
    if (c) out << ',';
    out << (c < d.feature_names.size() ? d.feature_names[c]
                                       : "x" + std::to_string(c));
  }
  if (d.labels) out << ',' << label_column;
  out << '\n';
  for (std::size_t i = 0; i < d.rows(); ++i) {
    const auto x = d.row(i);
    for (std::size_t c = 0; c < x.size(); ++c) {
      if (c) out << ',';
      out << format_double(x[c]);
    }
    if (d.labels) out << ',' << (*d.labels)[i];
    out << '\n';
  }
}

/// Draws n_norm normal and n_anom anomalous rows without replacement.
/// Output keeps the original row order.
inline Dataset subsample_classes(const Dataset& data, std::size_t n_norm,
                                 std::size_t n_anom, std::uint64_t seed) {
  if (!data.labels)
    throw std::invalid_argument("subsample_classes: dataset has no labels");
  std::vector<std::size_t> normals, anomalies;
  for (std::size_t i = 0; i < data.rows(); ++i)
    ((*data.labels)[i] == kAnomaly ? anomalies : normals).push_back(i);
  if (n_norm > normals.size() || n_anom > anomalies.size())
    throw std::invalid_argument(
        "subsample_classes: requested " + std::to_string(n_norm) + " normal / " +
        std::to_string(n_anom) + " anomalous, available " +
        std::to_string(normals.size()) + " / " +
        std::to_string(anomalies.size()));
  std::mt19937_64 rng(seed);
  std::shuffle(normals.begin(), normals.end(), rng);
  std::shuffle(anomalies.begin(), anomalies.end(), rng);
  std::vector<std::size_t> idx(normals.begin(),
                               normals.begin() + static_cast<std::ptrdiff_t>(n_norm));
  idx.insert(idx.end(), anomalies.begin(),
             anomalies.begin() + static_cast<std::ptrdiff_t>(n_anom));
  std::sort(idx.begin(), idx.end());
  return data.select(idx);
}

struct SplitSpec {
  double train_fraction = 2.0 / 3.0;
  std::uint64_t seed = 0;
  bool stratified = true;
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Stratifies by label when asked and labels exist; each group contributes
/// round(fraction * size) rows to train.
inline SplitIndices split_indices(const Dataset& data, const SplitSpec& spec) {
  const std::size_t n = data.rows();
  if (n < 3) throw std::invalid_argument("split: need at least 3 rows");
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0))
    throw std::invalid_argument("split: train_fraction must lie in (0, 1)");

  std::vector<std::vector<std::size_t>> groups;
  if (spec.stratified && data.labels) {
    groups.resize(2);
    for (std::size_t i = 0; i < n; ++i)
      groups[(*data.labels)[i] == kAnomaly ? 1 : 0].push_back(i);
  } else {
    groups.emplace_back(n);
    std::iota(groups[0].begin(), groups[0].end(), std::size_t{0});
  }

  std::mt19937_64 rng(spec.seed);
  SplitIndices out;
  for (auto& g : groups) {
    std::shuffle(g.begin(), g.end(), rng);
    const auto k = static_cast<std::size_t>(
        std::llround(spec.train_fraction * static_cast<double>(g.size())));
    out.train.insert(out.train.end(), g.begin(),
                     g.begin() + static_cast<std::ptrdiff_t>(k));
    out.test.insert(out.test.end(), g.begin() + static_cast<std::ptrdiff_t>(k),
                    g.end());
  }
  if (out.train.empty() || out.test.empty())
    throw std::invalid_argument("split: one side of the split is empty");
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

struct TrainTest {
  Dataset train;
  Dataset test;
};

inline TrainTest split(const Dataset& data, const SplitSpec& spec) {
  const SplitIndices idx = split_indices(data, spec);
  return {data.select(idx.train), data.select(idx.test)};
}

}  // namespace abif
