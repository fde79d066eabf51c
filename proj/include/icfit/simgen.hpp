#pragma once

#include "icfit/core.hpp"
#include "icfit/randcoef.hpp"
#include "icfit/rng.hpp"

// Seeded generators for the synthetic experiments. Every function is a pure
// function of its arguments and the state of the supplied generator.
namespace icfit::simgen {

// Symmetric band concentration matrix: 1 on the diagonal, 0.5 on the first
// off-diagonals, 0.25 on the second. Requires p >= 5; throws
// not_positive_definite if the band is not SPD.
Matrix ar2_concentration(Index p);

// n rows from N(0, C^{-1}) as L'^{-1} z with C = L L'.
Matrix sample_ggm_data(const Matrix& concentration, Index n, Rng& rng);

enum class Design { independent, ar2 };

struct RegressionSample {
  Matrix x;     // n x p, no intercept column
  Vector y;
  Vector beta;  // (beta_0, beta_1, ..., beta_p)
};

// (beta_0, ..., beta_5) = (1, 1, 2, -1.5, -2.5, 5) and zero elsewhere.
Vector regression_truth(Index p);

// Independent rows are N(0, 2I); ar2 rows are N(0, C^{-1}).
RegressionSample sample_regression_data(Design design, Index n, Index p, Rng& rng,
                                        double noise_sd = 1.0);

// Masks exactly floor(rate * n * p) distinct cells, uniformly without
// replacement, redrawing when a column would lose every entry.
IncompleteMatrix inject_mcar(const Matrix& data, double rate, Rng& rng, int max_attempts = 100);

struct RandCoefDims {
  Index customers = 100;
  Index items = 20;
  Index beta_dim = 3;  // first column of x, z and w is the constant 1
  Index z_dim = 2;
  Index w_dim = 2;
};

struct RandCoefTruth {
  Vector beta;
  double sigma2 = 1.0;
  Matrix lambda_cov;
  Matrix gamma_cov;
};

// beta = (1, 2, -1, 0.5, ...), sigma2 = 1, Lambda = Gamma = 0.5 I.
RandCoefTruth default_randcoef_truth(const RandCoefDims& dims);

struct RandCoefSample {
  randcoef::RandCoefData data;
  Matrix lambdas;
  Matrix gammas;
  Matrix noise;  // I x J
};

// Non-constant covariates are standard normal. Unit ids are 0..I-1 and 0..J-1.
RandCoefSample sample_randcoef_data(const RandCoefDims& dims, const RandCoefTruth& truth, Rng& rng);

}  // namespace icfit::simgen
