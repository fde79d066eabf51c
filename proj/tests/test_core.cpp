#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "icfit/core.hpp"

using namespace icfit;

namespace {

constexpr double NA = std::numeric_limits<double>::quiet_NaN();

Matrix m22(double a, double b, double c, double d) {
  Matrix m(2, 2);
  m << a, b, c, d;
  return m;
}

ChainTrace trace_of(std::initializer_list<std::vector<double>> rows, std::size_t burn_in) {
  ChainTrace t(burn_in);
  std::size_t label = 1;
  for (const auto& r : rows) t.append({label++, Eigen::Map<const Vector>(r.data(), r.size())});
  return t;
}

}  // namespace

TEST(IncompleteMatrix, MaskFollowsMissingCells) {
  const IncompleteMatrix m = make_incomplete(m22(1, NA, 3, 4));
  EXPECT_TRUE(m.observed(0, 0));
  EXPECT_FALSE(m.observed(0, 1));
  EXPECT_TRUE(m.observed(1, 0));
  EXPECT_TRUE(m.observed(1, 1));
  EXPECT_EQ(m.missing_count(), 1u);
  EXPECT_EQ(m.missing_in_row(0), std::vector<Index>{1});
  EXPECT_TRUE(m.missing_in_row(1).empty());
  EXPECT_EQ(m.observed_in_col(1), 1u);
}

TEST(IncompleteMatrix, FullyObservedKeepsValues) {
  const Matrix v = m22(1, 2, 3, 4);
  const IncompleteMatrix m = make_incomplete(v);
  EXPECT_TRUE(m.mask().all());
  EXPECT_EQ(m.imputed(), v);
  EXPECT_TRUE(m.fully_imputed());
}

TEST(IncompleteMatrix, AllMissingColumnIsRejected) {
  try {
    make_incomplete(m22(1, NA, 3, NA));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::all_missing_column);
    EXPECT_EQ(e.index(), 1u);
  }
}

TEST(IncompleteMatrix, InfiniteValuesAreRejected) {
  try {
    make_incomplete(m22(1, std::numeric_limits<double>::infinity(), 3, 4));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::non_finite_value);
  }
}

TEST(IncompleteMatrix, MismatchedMaskIsRejected) {
  EXPECT_THROW(IncompleteMatrix(m22(1, 2, 3, 4), BoolMatrix::Constant(3, 2, true)), Error);
}

TEST(IncompleteMatrix, ExportRoundTrip) {
  const Matrix v = m22(1, NA, NA, 4);
  const Matrix back = export_with_missing(median_fill(make_incomplete(v)));
  for (Index i = 0; i < 2; ++i)
    for (Index j = 0; j < 2; ++j) {
      if (std::isnan(v(i, j)))
        EXPECT_TRUE(std::isnan(back(i, j)));
      else
        EXPECT_EQ(back(i, j), v(i, j));
    }
}

TEST(IncompleteMatrix, OverlayCannotChangeObservedCells) {
  const IncompleteMatrix m = make_incomplete(m22(1, NA, 3, 4));
  EXPECT_THROW(m.with_imputed(m22(9, 2, 3, 4)), Error);
  EXPECT_THROW(m.with_imputed(m22(1, NA, 3, 4)), Error);
  const IncompleteMatrix filled = m.with_imputed(m22(1, 7, 3, 4));
  EXPECT_EQ(filled.imputed()(0, 1), 7.0);
  // The original is untouched.
  EXPECT_TRUE(std::isnan(m.imputed()(0, 1)));
}

TEST(MedianFill, OddCountUsesMiddleValue) {
  Matrix v(4, 1);
  v << 1, 5, NA, 3;
  EXPECT_EQ(median_fill(make_incomplete(v)).imputed()(2, 0), 3.0);
}

TEST(MedianFill, EvenCountAveragesMiddlePair) {
  Matrix v(3, 1);
  v << 2, NA, 4;
  EXPECT_EQ(median_fill(make_incomplete(v)).imputed()(1, 0), 3.0);
}

TEST(MedianFill, NoMissingCellsIsIdentity) {
  const Matrix v = m22(1, 2, 3, 4);
  EXPECT_EQ(median_fill(make_incomplete(v)).imputed(), v);
}

TEST(MedianFill, Idempotent) {
  Matrix v(4, 2);
  v << 1, NA, NA, 2, 7, 8, 4, NA;
  const IncompleteMatrix once = median_fill(make_incomplete(v));
  EXPECT_EQ(median_fill(once).imputed(), once.imputed());
}

TEST(ChainAverage, MeanOfPayloads) {
  const Vector avg = chain_average(trace_of({{1, 2}, {3, 4}}, 0));
  EXPECT_EQ(avg(0), 2.0);
  EXPECT_EQ(avg(1), 3.0);
}

TEST(ChainAverage, SingleSnapshotInWindow) {
  const Vector avg = chain_average(trace_of({{1, 2}, {3, 4}, {5, 6}}, 2));
  EXPECT_EQ(avg(0), 5.0);
  EXPECT_EQ(avg(1), 6.0);
}

TEST(ChainAverage, ThirtySnapshotsBurnInTwenty) {
  ChainTrace t(20);
  for (std::size_t k = 1; k <= 30; ++k) t.append({k, Vector::Constant(1, static_cast<double>(k))});
  EXPECT_DOUBLE_EQ(chain_average(t)(0), 25.5);  // mean of 21..30
  EXPECT_EQ(t.window().size(), 10u);
}

TEST(ChainAverage, EmptyWindowThrows) {
  try {
    chain_average(trace_of({{1}, {2}}, 2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::empty_window);
  }
}

TEST(ChainAverage, InvariantToWindowOrder) {
  const Vector a = chain_average(trace_of({{9}, {1.5}, {2.25}, {7}}, 1));
  const Vector b = chain_average(trace_of({{9}, {7}, {2.25}, {1.5}}, 1));
  EXPECT_DOUBLE_EQ(a(0), b(0));
}

TEST(ChainTrace, RejectsBadSnapshots) {
  ChainTrace t;
  t.append({1, Vector::Zero(2)});
  EXPECT_THROW(t.append({1, Vector::Zero(2)}), Error);  // label not increasing
  EXPECT_THROW(t.append({2, Vector::Zero(3)}), Error);  // length changes
  Vector bad = Vector::Zero(2);
  bad(0) = NA;
  EXPECT_THROW(t.append({2, bad}), Error);
  EXPECT_EQ(t.size(), 1u);
}

TEST(ChainTrace, CoordinateSeriesUsesWindow) {
  const ChainTrace t = trace_of({{1, 10}, {2, 20}, {3, 30}}, 1);
  const Vector s = t.coordinate_series(1);
  ASSERT_EQ(s.size(), 2);
  EXPECT_EQ(s(0), 20.0);
  EXPECT_EQ(s(1), 30.0);
}

TEST(Errors, CodesHaveNames) {
  EXPECT_STREQ(to_string(Errc::empty_window), "EmptyWindow");
  EXPECT_STREQ(to_string(Errc::infeasible_rate), "InfeasibleRate");
}
