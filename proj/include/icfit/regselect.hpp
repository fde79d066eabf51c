#pragma once

#include <optional>
#include <vector>

#include "icfit/core.hpp"
#include "icfit/engine.hpp"
#include "icfit/ggm.hpp"
#include "icfit/rng.hpp"

// High-dimensional linear regression with missing covariates: SIS screening,
// MCP coordinate descent, residual variance, and covariate imputation that
// combines the graph conditional with the regression likelihood.
namespace icfit::regselect {

struct RegressionEstimate {
  double intercept = 0.0;
  Vector coefficients;        // beta_1..beta_p
  std::vector<Index> support; // nonzero coefficients, increasing
  double sigma2 = 1.0;

  // (beta_0, beta_1, ..., beta_p)
  Vector beta() const;
  Vector residuals(const Matrix& x, const Vector& y) const;
};

std::vector<Index> support_of(const Vector& coefficients);

// Indices (increasing) of the `keep` columns with the largest absolute
// marginal correlation with y.
std::vector<Index> sis_screen(const Matrix& x, const Vector& y, Index keep);

double mcp_penalty(double t, double lambda, double gamma);

// Minimizer of 0.5 (b - z)^2 + mcp_penalty(|b|): the univariate MCP update
// for a column scaled to unit mean square.
double mcp_threshold(double z, double lambda, double gamma);

struct McpOptions {
  double gamma = 3.0;
  std::size_t max_sweeps = 10000;
  double tolerance = 1e-10;  // on the largest standardized coefficient change
  Index path_length = 50;
  double lambda_min_ratio = 0.01;
  // Extended BIC weight: adds 2 * ebic_gamma * log C(candidates, |support|).
  // Zero gives plain BIC. candidates = 0 means the number of columns fitted.
  double ebic_gamma = 1.0;
  Index candidates = 0;
};

struct McpFit {
  double intercept = 0.0;
  Vector coefficients;  // original scale
  double lambda = 0.0;
  std::size_t sweeps = 0;
  std::vector<double> objective;  // per sweep, standardized scale
};

class NoConvergence : public Error {
 public:
  NoConvergence(std::size_t sweeps, McpFit best)
      : Error(Errc::no_convergence,
              "MCP coordinate descent did not converge in " + std::to_string(sweeps) + " sweeps",
              sweeps),
        best_(std::move(best)) {}
  const McpFit& best() const { return best_; }

 private:
  McpFit best_;
};

// Largest useful lambda: max_j |z_j' (y - ybar)| / n on standardized columns.
double lambda_max(const Matrix& x, const Vector& y);

// Coordinate descent for (1/2n)||y - b0 - Z b||^2 + sum_j mcp(|b_j|) on the
// standardized design Z; coefficients are returned on the original scale.
McpFit mcp_fit(const Matrix& x, const Vector& y, double lambda, const McpOptions& options = {});

// Warm-started path of path_length log-spaced lambdas from lambda_max down to
// lambda_min_ratio * lambda_max; the fit with the smallest
// BIC = n log(RSS/n) + |support| log n (plus the extended term) wins.
McpFit mcp_select(const Matrix& x, const Vector& y, const McpOptions& options = {});

// Sum of squared residuals over (n - support_size - 1), floored at 1e-12.
double estimate_sigma2(const Vector& residuals, Index support_size);
inline constexpr double kSigma2Floor = 1e-12;

// Iterative SIS with MCP and BIC; keep = 0 means ceil(n / ln n). Round one
// screens on y. Each later round keeps the current support and refills the
// remaining keep - |support| slots with the columns most correlated with the
// residual, then refits. Stops when the support repeats or after `rounds`.
inline constexpr int kSisRounds = 5;
RegressionEstimate sis_mcp(const Matrix& x, const Vector& y, Index keep = 0,
                           const McpOptions& options = {}, int rounds = kSisRounds);

// Normal for x_hk combining the graph conditional N(prior_mean, prior_variance)
// with y_h ~ N(partial + beta_k x_hk, sigma2), where partial_residual is
// y_h - beta_0 - sum_{j != k} beta_j x_hj.
ggm::ConditionalNormalParams covariate_posterior(double prior_mean, double prior_variance,
                                                 double beta_k, double sigma2,
                                                 double partial_residual);

// Draws x_hk for row `row` (current fill) of the design.
double impute_covariate(const Eigen::Ref<const Eigen::RowVectorXd>& row, Index k,
                        const RegressionEstimate& fit, const ggm::ImputationPlan& plan,
                        double y, Rng& rng);

struct RegressionOptions {
  Index keep = 0;  // SIS size, 0 = ceil(n / ln n)
  int sis_rounds = kSisRounds;
  McpOptions mcp;
  ggm::GgmOptions graph;
  int selection_threshold = 5;
};

struct RegressionParams {
  RegressionEstimate fit;
  ggm::GraphEstimate graph;
};

// ICC model with blocks beta (1), sigma2 (2) and graph (3). Snapshot payload:
// (beta_0, beta_1, ..., beta_p, sigma2).
class RegressionModel {
 public:
  using Latent = IncompleteMatrix;
  using Params = RegressionParams;

  RegressionModel(Vector y, RegressionOptions options = {});

  std::vector<BlockSpec> blocks() const;
  Params initial_params(const IncompleteMatrix& filled) const;
  Params estimate_complete_cases(const IncompleteMatrix& data) const;
  IncompleteMatrix impute(const IncompleteMatrix& data, const Params& params, Rng& rng) const;
  void update_block(std::size_t block, const IncompleteMatrix& data, Params& params, Rng& rng) const;
  Vector flatten(const Params& params) const;

  const Vector& response() const { return y_; }
  const RegressionOptions& options() const { return options_; }

 private:
  Vector y_;
  RegressionOptions options_;
};

struct SelectionReport {
  std::vector<int> counts;       // per covariate, over the post-burn-in window
  std::vector<Index> selected;   // counts >= threshold
  int threshold = 5;
  std::size_t window = 0;
};

// Counts nonzero beta_1..beta_p in the post-burn-in snapshots of a trace laid
// out as RegressionModel::flatten.
SelectionReport selection_report(const ChainTrace& trace, Index p, int threshold = 5);

struct IccRegressionResult {
  ChainTrace trace;
  Vector beta;  // averaged (beta_0, ..., beta_p)
  double sigma2 = 0.0;
  SelectionReport report;
};

IccRegressionResult summarize(const ChainTrace& trace, Index p, int threshold = 5);

IccRegressionResult icc_regression(const IncompleteMatrix& x, const Vector& y,
                                   const EngineConfig& cfg, const RegressionOptions& options = {});

}  // namespace icfit::regselect
