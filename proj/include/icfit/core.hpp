#pragma once

#include <cstddef>
#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "icfit/errors.hpp"

namespace icfit {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;
using Index = Eigen::Index;

// A partially observed n x p matrix. The observed values and the mask are
// immutable and shared between copies; only the imputation overlay changes,
// and only through with_imputed(), which returns a new object.
//
// In memory a missing cell is NaN in values(); in files it is the literal "NA".
class IncompleteMatrix {
 public:
  IncompleteMatrix(Matrix values, BoolMatrix mask);

  Index rows() const { return imputed_.rows(); }
  Index cols() const { return imputed_.cols(); }

  const Matrix& values() const { return layout_->values; }
  const BoolMatrix& mask() const { return layout_->mask; }
  // Equals values() on observed cells. Missing cells hold the current fill,
  // or NaN while nothing has been imputed yet.
  const Matrix& imputed() const { return imputed_; }

  bool observed(Index i, Index j) const { return layout_->mask(i, j); }
  std::size_t missing_count() const { return layout_->missing_total; }
  // Missing column indices of row i in increasing order.
  const std::vector<Index>& missing_in_row(Index i) const {
    return layout_->missing_by_row[static_cast<std::size_t>(i)];
  }
  std::size_t observed_in_col(Index j) const {
    return layout_->observed_by_col[static_cast<std::size_t>(j)];
  }

  // Copy with a new overlay. Throws if the overlay disagrees with an observed
  // cell or carries a non-finite value in a missing cell.
  IncompleteMatrix with_imputed(Matrix overlay) const;

  // True when every missing cell carries a finite fill.
  bool fully_imputed() const;

 private:
  struct Layout {
    Matrix values;
    BoolMatrix mask;
    std::vector<std::vector<Index>> missing_by_row;
    std::vector<std::size_t> observed_by_col;
    std::size_t missing_total = 0;
  };

  IncompleteMatrix(std::shared_ptr<const Layout> layout, Matrix imputed)
      : layout_(std::move(layout)), imputed_(std::move(imputed)) {}

  std::shared_ptr<const Layout> layout_;
  Matrix imputed_;
};

// NaN cells become missing. Infinite entries are rejected.
IncompleteMatrix make_incomplete(const Matrix& values);

// Inverse of make_incomplete: observed values with NaN in missing cells.
Matrix export_with_missing(const IncompleteMatrix& m);

// Median of the observed entries of each column; the mean of the two central
// order statistics when the count is even.
Vector observed_column_medians(const IncompleteMatrix& m);

IncompleteMatrix median_fill(const IncompleteMatrix& m);

struct ParameterSnapshot {
  std::size_t label = 0;
  Vector payload;
};

// Per-iteration parameter snapshots of one chain. Labels start at 1 and
// increase strictly; every payload has the same length and is finite.
class ChainTrace {
 public:
  explicit ChainTrace(std::size_t burn_in = 0) : burn_in_(burn_in) {}

  void append(ParameterSnapshot snapshot);

  const std::vector<ParameterSnapshot>& snapshots() const { return snapshots_; }
  std::size_t size() const { return snapshots_.size(); }
  bool empty() const { return snapshots_.empty(); }
  Index dimension() const { return snapshots_.empty() ? 0 : snapshots_.front().payload.size(); }

  std::size_t burn_in() const { return burn_in_; }
  void set_burn_in(std::size_t burn_in) { burn_in_ = burn_in; }

  const ParameterSnapshot& back() const { return snapshots_.back(); }

  // Snapshots whose label exceeds burn_in.
  std::vector<const ParameterSnapshot*> window() const;

  // Values of one coordinate over the post-burn-in window.
  Vector coordinate_series(Index coordinate) const;

 private:
  std::vector<ParameterSnapshot> snapshots_;
  std::size_t burn_in_;
};

// Componentwise mean of the post-burn-in payloads.
Vector chain_average(const ChainTrace& trace);

}  // namespace icfit
