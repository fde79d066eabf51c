#include "icfit/reference.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/LU>

namespace icfit::reference {

Matrix correlation_matrix(const Matrix& data) {
  const Index n = data.rows();
  const Index p = data.cols();
  std::vector<double> mean(static_cast<std::size_t>(p), 0.0);
  for (Index j = 0; j < p; ++j) {
    double s = 0.0;
    for (Index i = 0; i < n; ++i) s += data(i, j);
    mean[static_cast<std::size_t>(j)] = s / static_cast<double>(n);
  }
  Matrix cov(p, p);
  for (Index a = 0; a < p; ++a)
    for (Index b = a; b < p; ++b) {
      double s = 0.0;
      for (Index i = 0; i < n; ++i)
        s += (data(i, a) - mean[static_cast<std::size_t>(a)]) *
             (data(i, b) - mean[static_cast<std::size_t>(b)]);
      cov(a, b) = cov(b, a) = s;
    }
  Matrix corr(p, p);
  for (Index a = 0; a < p; ++a) {
    if (!(cov(a, a) > 0.0))
      throw Error(Errc::degenerate_column, "zero-variance column", static_cast<std::size_t>(a));
    for (Index b = 0; b < p; ++b) corr(a, b) = cov(a, b) / std::sqrt(cov(a, a) * cov(b, b));
  }
  return corr;
}

double partial_correlation(const Matrix& corr, Index i, Index j, const std::vector<Index>& given) {
  std::vector<Index> idx{i, j};
  idx.insert(idx.end(), given.begin(), given.end());
  const Index k = static_cast<Index>(idx.size());
  Matrix sub(k, k);
  for (Index a = 0; a < k; ++a)
    for (Index b = 0; b < k; ++b) sub(a, b) = corr(idx[a], idx[b]);
  const Matrix prec = sub.fullPivLu().inverse();
  return -prec(0, 1) / std::sqrt(prec(0, 0) * prec(1, 1));
}

Matrix psi_scores(const Matrix& data, const ggm::Neighborhoods& hoods, Index cap) {
  const Index n = data.rows();
  const Matrix corr = correlation_matrix(data);
  const Index p = corr.rows();
  const Index limit = std::min<Index>(cap, n - 4);
  Matrix scores = Matrix::Zero(p, p);
  for (Index i = 0; i < p; ++i)
    for (Index j = i + 1; j < p; ++j) {
      const auto given = ggm::conditioning_set(corr, hoods, i, j, limit);
      const double r = partial_correlation(corr, i, j, given);
      const double dof = static_cast<double>(n - static_cast<Index>(given.size()) - 3);
      const double clamped = std::clamp(r, -ggm::kCorrelationClamp, ggm::kCorrelationClamp);
      scores(i, j) = scores(j, i) = std::sqrt(dof) * std::atanh(clamped);
    }
  return scores;
}

}  // namespace icfit::reference
