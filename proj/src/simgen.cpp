#include "icfit/simgen.hpp"

#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Cholesky>

namespace icfit::simgen {
namespace {

Matrix standard_normals(Index rows, Index cols, Rng& rng) {
  Matrix z(rows, cols);
  // Row-major fill keeps a row's draws contiguous in the stream.
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) z(i, j) = draw_normal(rng);
  return z;
}

Matrix covariates(Index rows, Index cols, Rng& rng) {
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    if (cols > 0) m(i, 0) = 1.0;
    for (Index j = 1; j < cols; ++j) m(i, j) = draw_normal(rng);
  }
  return m;
}

// Zero covariance gives zero rows without consuming draws.
Matrix mvn_rows(const Matrix& cov, Index n, Rng& rng) {
  if (cov.size() == 0 || cov.cwiseAbs().maxCoeff() == 0.0) return Matrix::Zero(n, cov.rows());
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success)
    throw Error(Errc::factorization_failure, "covariance is not positive definite");
  return standard_normals(n, cov.rows(), rng) * Matrix(llt.matrixL()).transpose();
}

}  // namespace

Matrix ar2_concentration(Index p) {
  if (p < 5) throw Error(Errc::invalid_argument, "ar2 concentration needs p >= 5");
  Matrix c = Matrix::Zero(p, p);
  for (Index i = 0; i < p; ++i) {
    c(i, i) = 1.0;
    if (i + 1 < p) c(i, i + 1) = c(i + 1, i) = 0.5;
    if (i + 2 < p) c(i, i + 2) = c(i + 2, i) = 0.25;
  }
  if (randcoef::min_eigenvalue(c) <= 0.0)
    throw Error(Errc::not_positive_definite, "ar2 band is not positive definite");
  return c;
}

Matrix sample_ggm_data(const Matrix& concentration, Index n, Rng& rng) {
  Eigen::LLT<Matrix> llt(concentration);
  if (llt.info() != Eigen::Success)
    throw Error(Errc::factorization_failure, "concentration matrix is not positive definite");
  const Index p = concentration.rows();
  const Matrix z = standard_normals(n, p, rng);
  // Row x = L'^{-1} z, computed for all rows at once: X' = L'^{-1} Z'.
  const Matrix xt = llt.matrixU().solve(z.transpose());
  return xt.transpose();
}

Vector regression_truth(Index p) {
  if (p < 5) throw Error(Errc::invalid_argument, "regression truth needs p >= 5");
  Vector beta = Vector::Zero(p + 1);
  beta.head(6) << 1.0, 1.0, 2.0, -1.5, -2.5, 5.0;
  return beta;
}

RegressionSample sample_regression_data(Design design, Index n, Index p, Rng& rng,
                                        double noise_sd) {
  if (p < 6) throw Error(Errc::invalid_argument, "regression data needs p >= 6");
  if (n < 1) throw Error(Errc::invalid_argument, "regression data needs n >= 1");
  if (!(noise_sd >= 0.0)) throw Error(Errc::invalid_argument, "noise sd must be non-negative");
  RegressionSample s;
  s.beta = regression_truth(p);
  if (design == Design::independent)
    s.x = std::sqrt(2.0) * standard_normals(n, p, rng);
  else
    s.x = sample_ggm_data(ar2_concentration(p), n, rng);
  s.y = (s.x * s.beta.tail(p)).array() + s.beta(0);
  if (noise_sd > 0.0)
    for (Index i = 0; i < n; ++i) s.y(i) += noise_sd * draw_normal(rng);
  return s;
}

IncompleteMatrix inject_mcar(const Matrix& data, double rate, Rng& rng, int max_attempts) {
  if (!(rate >= 0.0 && rate < 1.0))
    throw Error(Errc::invalid_argument, "missing rate must lie in [0, 1)");
  if (!data.allFinite()) throw Error(Errc::non_finite_value, "data must be complete and finite");
  const Index n = data.rows();
  const Index p = data.cols();
  const Index cells = n * p;
  const auto count = static_cast<Index>(std::floor(rate * static_cast<double>(cells) + 1e-9));
  if (count == 0) return make_incomplete(data);
  if (count > cells - p)
    throw Error(Errc::infeasible_rate,
                "cannot mask " + std::to_string(count) + " cells without emptying a column");

  std::vector<Index> order(static_cast<std::size_t>(cells));
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    std::iota(order.begin(), order.end(), Index{0});
    // Partial Fisher-Yates: the first `count` slots are a uniform sample.
    for (Index k = 0; k < count; ++k) {
      std::uniform_int_distribution<Index> pick(k, cells - 1);
      std::swap(order[static_cast<std::size_t>(k)], order[static_cast<std::size_t>(pick(rng))]);
    }
    std::vector<Index> lost(static_cast<std::size_t>(p), 0);
    Matrix masked = data;
    for (Index k = 0; k < count; ++k) {
      const Index cell = order[static_cast<std::size_t>(k)];
      const Index i = cell / p;
      const Index j = cell % p;
      masked(i, j) = std::numeric_limits<double>::quiet_NaN();
      ++lost[static_cast<std::size_t>(j)];
    }
    bool ok = true;
    for (Index j = 0; j < p; ++j) ok = ok && lost[static_cast<std::size_t>(j)] < n;
    if (ok) return make_incomplete(masked);
  }
  throw Error(Errc::infeasible_rate, "every attempt emptied a column");
}

RandCoefTruth default_randcoef_truth(const RandCoefDims& dims) {
  RandCoefTruth t;
  t.beta = Vector::Zero(dims.beta_dim);
  const double base[] = {1.0, 2.0, -1.0};
  for (Index k = 0; k < dims.beta_dim; ++k) t.beta(k) = k < 3 ? base[k] : 0.5;
  t.sigma2 = 1.0;
  t.lambda_cov = 0.5 * Matrix::Identity(dims.z_dim, dims.z_dim);
  t.gamma_cov = 0.5 * Matrix::Identity(dims.w_dim, dims.w_dim);
  return t;
}

RandCoefSample sample_randcoef_data(const RandCoefDims& dims, const RandCoefTruth& truth,
                                    Rng& rng) {
  if (dims.customers < 1 || dims.items < 1 || dims.beta_dim < 1 || dims.z_dim < 1 ||
      dims.w_dim < 1)
    throw Error(Errc::invalid_argument, "random-coefficient dimensions must be positive");
  if (truth.beta.size() != dims.beta_dim || truth.lambda_cov.rows() != dims.z_dim ||
      truth.gamma_cov.rows() != dims.w_dim)
    throw Error(Errc::dimension_mismatch, "truth does not match the dimensions");
  if (!(truth.sigma2 >= 0.0)) throw Error(Errc::invalid_argument, "sigma2 must be non-negative");

  RandCoefSample s;
  randcoef::RandCoefData& d = s.data;
  d.customers = dims.customers;
  d.items = dims.items;
  d.x = covariates(dims.customers * dims.items, dims.beta_dim, rng);
  d.z = covariates(dims.customers, dims.z_dim, rng);
  d.w = covariates(dims.items, dims.w_dim, rng);
  s.lambdas = mvn_rows(truth.lambda_cov, dims.customers, rng);
  s.gammas = mvn_rows(truth.gamma_cov, dims.items, rng);
  s.noise = std::sqrt(truth.sigma2) * standard_normals(dims.customers, dims.items, rng);
  d.y.resize(dims.customers, dims.items);
  for (Index i = 0; i < dims.customers; ++i)
    for (Index j = 0; j < dims.items; ++j)
      d.y(i, j) = d.x.row(d.row(i, j)).dot(truth.beta) + d.z.row(i).dot(s.lambdas.row(i)) +
                  d.w.row(j).dot(s.gammas.row(j)) + s.noise(i, j);
  d.customer_ids.resize(static_cast<std::size_t>(dims.customers));
  d.item_ids.resize(static_cast<std::size_t>(dims.items));
  std::iota(d.customer_ids.begin(), d.customer_ids.end(), std::int64_t{0});
  std::iota(d.item_ids.begin(), d.item_ids.end(), std::int64_t{0});
  return s;
}

}  // namespace icfit::simgen
