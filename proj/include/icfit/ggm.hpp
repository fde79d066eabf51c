#pragma once

#include <span>
#include <vector>

#include "icfit/core.hpp"
#include "icfit/parallel.hpp"
#include "icfit/rng.hpp"

// Gaussian graphical model pieces of the IC algorithm: correlation screening,
// Fisher-transformed partial correlations ("psi-scores") on the screened
// neighborhoods, FDR thresholding, and neighborhood-conditional imputation.
namespace icfit::ggm {

struct GraphEstimate {
  BoolMatrix adjacency;  // symmetric, false diagonal
  Matrix scores;         // symmetric, zero diagonal
  Index neighborhood_cap = 0;

  Index nodes() const { return scores.rows(); }
  std::vector<Index> neighbors(Index j) const;
};

struct ConditionalNormalParams {
  double mean = 0.0;
  double variance = 1.0;
};

using Neighborhoods = std::vector<std::vector<Index>>;

// ceil(n / ln n), the default neighborhood bound.
Index default_cap(Index n);

// atanh clamp applied to every correlation before the Fisher transform.
inline constexpr double kCorrelationClamp = 1.0 - 1e-8;

Matrix correlation_matrix(const Matrix& data, Execution exec = Execution::parallel);

// For each node, the `cap` other nodes with the largest absolute correlation
// (ties broken by lower index), listed in decreasing order of |r|.
Neighborhoods screen_neighborhoods(const Matrix& data, Index cap,
                                   Execution exec = Execution::parallel);
Neighborhoods screen_from_correlation(const Matrix& corr, Index cap);

// Conditioning set for pair (i, j): the union of both neighborhoods without
// i and j. When it exceeds `limit`, the members with the largest
// max(|r_ik|, |r_jk|) are kept. Returned in increasing index order.
std::vector<Index> conditioning_set(const Matrix& corr, const Neighborhoods& hoods, Index i,
                                    Index j, Index limit);

// Sample partial correlation of i and j given `given`, from a correlation
// matrix. Falls back to a ridge on the conditioning block when it is
// numerically singular.
double partial_correlation(const Matrix& corr, Index i, Index j, std::span<const Index> given);

// sqrt(n - |S| - 3) * atanh(r) with r clamped to +-kCorrelationClamp.
double fisher_score(double r, Index n, Index given_size);

Matrix psi_scores(const Matrix& data, const Neighborhoods& hoods, Index cap,
                  Execution exec = Execution::parallel);
Matrix psi_scores_from_correlation(const Matrix& corr, Index n, const Neighborhoods& hoods,
                                   Index cap, Execution exec = Execution::parallel);

// Benjamini-Hochberg at level q on two-sided standard-normal p-values of the
// upper-triangle scores. Surviving edges are then admitted in decreasing
// |score| order while both endpoints have fewer than `cap` neighbors.
GraphEstimate threshold_graph(const Matrix& scores, double q, Index cap);

// Row-major upper triangle (i < j) <-> symmetric matrix with zero diagonal.
Vector pack_upper(const Matrix& symmetric);
Matrix unpack_upper(const Vector& packed, Index p);

Matrix average_psi(std::span<const Matrix> scores);

struct Moments {
  Vector mean;
  Matrix cov;  // denominator n - 1
};

Moments sample_moments(const Matrix& data);

// Conditional normal of column j given the neighborhood values, with the
// regression coefficients on the neighborhood precomputed once per I-step.
class ImputationPlan {
 public:
  // Builds entries for `columns` only (every column when empty).
  ImputationPlan(const Moments& moments, const GraphEstimate& graph,
                 std::span<const Index> columns = {});

  ConditionalNormalParams conditional(Index j, const Eigen::Ref<const Eigen::RowVectorXd>& row) const;

  const std::vector<Index>& neighborhood(Index j) const { return entry(j).omega; }

  // Ridge added to S_ww when its smallest eigenvalue drops below 1e-10.
  static constexpr double kRidge = 1e-6;
  static constexpr double kEigenFloor = 1e-10;
  static constexpr double kVarianceFloor = 1e-12;

 private:
  struct Entry {
    bool built = false;
    std::vector<Index> omega;
    Vector coef;  // S_ww^{-1} S_wj
    double variance = 0.0;
  };
  const Entry& entry(Index j) const;

  Vector mean_;
  std::vector<Entry> entries_;
};

double draw(const ConditionalNormalParams& params, Rng& rng);

// One I-step: every missing cell is redrawn from its neighborhood-conditional
// normal. Moments are computed once from the current fill; cells of a row are
// visited in column order, each conditioning on the freshest row values.
IncompleteMatrix impute_ggm(const IncompleteMatrix& data, const GraphEstimate& graph, Rng& rng,
                            Execution exec = Execution::parallel);

struct GgmOptions {
  double q = 0.05;
  Index cap = 0;  // 0 = default_cap(n)
  Execution exec = Execution::parallel;
};

// C-step: screen, score and threshold.
GraphEstimate learn_graph(const Matrix& data, const GgmOptions& options = {});

// IC model. Snapshot payload: pack_upper(scores), i.e. the psi-scores of
// pairs (0,1), (0,2), ..., (0,p-1), (1,2), ... in that order.
class GgmModel {
 public:
  using Params = GraphEstimate;

  explicit GgmModel(GgmOptions options = {}) : options_(options) {}

  Params estimate(const IncompleteMatrix& data) const;
  Params estimate_complete_cases(const IncompleteMatrix& data) const;
  IncompleteMatrix impute(const IncompleteMatrix& data, const Params& graph, Rng& rng) const;
  Vector flatten(const Params& graph) const { return pack_upper(graph.scores); }

  const GgmOptions& options() const { return options_; }

 private:
  GgmOptions options_;
};

}  // namespace icfit::ggm
