#pragma once

#include "icfit/core.hpp"
#include "icfit/ggm.hpp"

// Straightforward serial versions of the parallel kernels. They share no
// numeric code with the optimized paths and exist for tests and benchmarks.
namespace icfit::reference {

Matrix correlation_matrix(const Matrix& data);

// Partial correlation from the inverse of the correlation submatrix over
// {i, j} and the conditioning set: -P_ij / sqrt(P_ii P_jj).
double partial_correlation(const Matrix& corr, Index i, Index j, const std::vector<Index>& given);

Matrix psi_scores(const Matrix& data, const ggm::Neighborhoods& hoods, Index cap);

}  // namespace icfit::reference
