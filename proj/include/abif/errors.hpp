#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace abif {

// Invalid arguments are reported with std::invalid_argument throughout.

/// Raised by the CSV reader; carries the 1-based row (data rows, header
/// excluded) and column name when the failure is cell-specific.
class IngestionError : public std::runtime_error {
 public:
  IngestionError(const std::string& what, std::size_t row = 0,
                 std::string column = {})
      : std::runtime_error(what), row_(row), column_(std::move(column)) {}

  std::size_t row() const noexcept { return row_; }
  const std::string& column() const noexcept { return column_; }

 private:
  std::size_t row_;
  std::string column_;
};

/// The solver ran out of iterations. The best iterate seen so far and the
/// residual at that point travel with the exception.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, std::vector<double> best_w,
                   double best_objective, double residual, int iterations)
      : std::runtime_error(what),
        best_w_(std::move(best_w)),
        best_objective_(best_objective),
        residual_(residual),
        iterations_(iterations) {}

  const std::vector<double>& best_w() const noexcept { return best_w_; }
  double best_objective() const noexcept { return best_objective_; }
  double residual() const noexcept { return residual_; }
  int iterations() const noexcept { return iterations_; }

 private:
  std::vector<double> best_w_;
  double best_objective_;
  double residual_;
  int iterations_;
};

}  // namespace abif
