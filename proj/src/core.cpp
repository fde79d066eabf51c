#include "icfit/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace icfit {

const char* to_string(Errc code) {
  switch (code) {
    case Errc::invalid_argument: return "InvalidArgument";
    case Errc::dimension_mismatch: return "DimensionMismatch";
    case Errc::all_missing_column: return "AllMissingColumn";
    case Errc::non_finite_value: return "NonFiniteValue";
    case Errc::empty_window: return "EmptyWindow";
    case Errc::estimator_failure: return "EstimatorFailure";
    case Errc::block_failure: return "BlockFailure";
    case Errc::insufficient_chains: return "InsufficientChains";
    case Errc::degenerate_column: return "DegenerateColumn";
    case Errc::degenerate_dof: return "DegenerateDof";
    case Errc::no_convergence: return "NoConvergence";
    case Errc::singular_precision: return "SingularPrecision";
    case Errc::not_positive_definite: return "NotPositiveDefinite";
    case Errc::factorization_failure: return "FactorizationFailure";
    case Errc::infeasible_rate: return "InfeasibleRate";
    case Errc::no_true_edges: return "NoTrueEdges";
    case Errc::io: return "Io";
    case Errc::parse: return "Parse";
  }
  return "Unknown";
}

IncompleteMatrix::IncompleteMatrix(Matrix values, BoolMatrix mask) {
  if (values.rows() != mask.rows() || values.cols() != mask.cols())
    throw Error(Errc::dimension_mismatch, "values and mask dimensions differ");
  if (values.rows() == 0 || values.cols() == 0)
    throw Error(Errc::dimension_mismatch, "empty matrix");

  auto layout = std::make_shared<Layout>();
  const Index n = values.rows();
  const Index p = values.cols();
  layout->missing_by_row.resize(static_cast<std::size_t>(n));
  layout->observed_by_col.assign(static_cast<std::size_t>(p), 0);

  for (Index j = 0; j < p; ++j) {
    for (Index i = 0; i < n; ++i) {
      if (mask(i, j)) {
        if (!std::isfinite(values(i, j)))
          throw Error(Errc::non_finite_value,
                      "non-finite observed value at (" + std::to_string(i) + ", " +
                          std::to_string(j) + ")",
                      static_cast<std::size_t>(j));
        ++layout->observed_by_col[static_cast<std::size_t>(j)];
      } else {
        values(i, j) = std::numeric_limits<double>::quiet_NaN();
      }
    }
    if (layout->observed_by_col[static_cast<std::size_t>(j)] == 0)
      throw Error(Errc::all_missing_column, "column " + std::to_string(j) + " is fully missing",
                  static_cast<std::size_t>(j));
  }
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < p; ++j)
      if (!mask(i, j)) {
        layout->missing_by_row[static_cast<std::size_t>(i)].push_back(j);
        ++layout->missing_total;
      }

  imputed_ = values;
  layout->values = std::move(values);
  layout->mask = std::move(mask);
  layout_ = std::move(layout);
}

IncompleteMatrix IncompleteMatrix::with_imputed(Matrix overlay) const {
  if (overlay.rows() != rows() || overlay.cols() != cols())
    throw Error(Errc::dimension_mismatch, "overlay dimensions differ from data");
  for (Index j = 0; j < cols(); ++j)
    for (Index i = 0; i < rows(); ++i) {
      if (layout_->mask(i, j)) {
        if (overlay(i, j) != layout_->values(i, j))
          throw Error(Errc::invalid_argument, "overlay modifies an observed cell");
      } else if (!std::isfinite(overlay(i, j))) {
        throw Error(Errc::non_finite_value, "non-finite imputed value",
                    static_cast<std::size_t>(j));
      }
    }
  return IncompleteMatrix(layout_, std::move(overlay));
}

bool IncompleteMatrix::fully_imputed() const {
  for (std::size_t i = 0; i < layout_->missing_by_row.size(); ++i)
    for (Index j : layout_->missing_by_row[i])
      if (!std::isfinite(imputed_(static_cast<Index>(i), j))) return false;
  return true;
}

IncompleteMatrix make_incomplete(const Matrix& values) {
  BoolMatrix mask(values.rows(), values.cols());
  for (Index j = 0; j < values.cols(); ++j)
    for (Index i = 0; i < values.rows(); ++i) {
      const double v = values(i, j);
      if (std::isinf(v))
        throw Error(Errc::non_finite_value, "infinite value in input",
                    static_cast<std::size_t>(j));
      mask(i, j) = !std::isnan(v);
    }
  return IncompleteMatrix(values, std::move(mask));
}

Matrix export_with_missing(const IncompleteMatrix& m) { return m.values(); }

Vector observed_column_medians(const IncompleteMatrix& m) {
  Vector medians(m.cols());
  std::vector<double> column;
  for (Index j = 0; j < m.cols(); ++j) {
    column.clear();
    for (Index i = 0; i < m.rows(); ++i)
      if (m.observed(i, j)) column.push_back(m.values()(i, j));
    const std::size_t k = column.size();
    const auto mid = column.begin() + static_cast<std::ptrdiff_t>(k / 2);
    std::nth_element(column.begin(), mid, column.end());
    double med = *mid;
    if (k % 2 == 0) med = 0.5 * (med + *std::max_element(column.begin(), mid));
    medians(j) = med;
  }
  return medians;
}

IncompleteMatrix median_fill(const IncompleteMatrix& m) {
  if (m.missing_count() == 0) return m;
  const Vector medians = observed_column_medians(m);
  Matrix overlay = m.imputed();
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j : m.missing_in_row(i)) overlay(i, j) = medians(j);
  return m.with_imputed(std::move(overlay));
}

void ChainTrace::append(ParameterSnapshot snapshot) {
  if (!snapshots_.empty()) {
    if (snapshot.label <= snapshots_.back().label)
      throw Error(Errc::invalid_argument, "snapshot labels must increase strictly");
    if (snapshot.payload.size() != dimension())
      throw Error(Errc::dimension_mismatch, "snapshot payload length changed within a chain");
  }
  if (!snapshot.payload.allFinite())
    throw Error(Errc::non_finite_value, "snapshot payload has non-finite entries",
                snapshot.label);
  snapshots_.push_back(std::move(snapshot));
}

std::vector<const ParameterSnapshot*> ChainTrace::window() const {
  std::vector<const ParameterSnapshot*> out;
  for (const auto& s : snapshots_)
    if (s.label > burn_in_) out.push_back(&s);
  return out;
}

Vector ChainTrace::coordinate_series(Index coordinate) const {
  if (coordinate < 0 || coordinate >= dimension())
    throw Error(Errc::invalid_argument, "coordinate out of range");
  const auto w = window();
  Vector out(static_cast<Index>(w.size()));
  for (std::size_t t = 0; t < w.size(); ++t) out(static_cast<Index>(t)) = w[t]->payload(coordinate);
  return out;
}

Vector chain_average(const ChainTrace& trace) {
  const auto w = trace.window();
  if (w.empty()) throw Error(Errc::empty_window, "no snapshots after burn-in");
  Vector sum = Vector::Zero(trace.dimension());
  for (const auto* s : w) sum += s->payload;
  return sum / static_cast<double>(w.size());
}

}  // namespace icfit
