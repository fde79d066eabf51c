#include "icfit/regselect.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace icfit::regselect {

Vector RegressionEstimate::beta() const {
  Vector b(coefficients.size() + 1);
  b(0) = intercept;
  b.tail(coefficients.size()) = coefficients;
  return b;
}

Vector RegressionEstimate::residuals(const Matrix& x, const Vector& y) const {
  Vector r = y.array() - intercept;
  for (Index j : support) r -= coefficients(j) * x.col(j);
  return r;
}

std::vector<Index> support_of(const Vector& coefficients) {
  std::vector<Index> s;
  for (Index j = 0; j < coefficients.size(); ++j)
    if (coefficients(j) != 0.0) s.push_back(j);
  return s;
}

namespace {

struct Standardized {
  Matrix z;      // centered, columns with unit mean square
  Vector mean;
  Vector scale;
  Vector yc;
  double ybar = 0.0;
};

Standardized standardize(const Matrix& x, const Vector& y) {
  if (x.rows() != y.size()) throw Error(Errc::dimension_mismatch, "x rows differ from y length");
  if (x.rows() < 2) throw Error(Errc::invalid_argument, "need at least two observations");
  const double n = static_cast<double>(x.rows());
  Standardized s;
  s.mean = x.colwise().mean().transpose();
  s.z = x.rowwise() - s.mean.transpose();
  s.scale = (s.z.colwise().squaredNorm() / n).cwiseSqrt().transpose();
  for (Index j = 0; j < x.cols(); ++j) {
    if (!(s.scale(j) > 0.0))
      throw Error(Errc::degenerate_column, "column " + std::to_string(j) + " has zero variance",
                  static_cast<std::size_t>(j));
    s.z.col(j) /= s.scale(j);
  }
  s.ybar = y.mean();
  s.yc = y.array() - s.ybar;
  return s;
}

double objective(const Vector& r, const Vector& b, double lambda, double gamma) {
  double pen = 0.0;
  for (Index j = 0; j < b.size(); ++j) pen += mcp_penalty(std::abs(b(j)), lambda, gamma);
  return 0.5 * r.squaredNorm() / static_cast<double>(r.size()) + pen;
}

struct CdResult {
  Vector b;
  Vector r;
  std::size_t sweeps = 0;
  bool converged = false;
  std::vector<double> objective;
};

CdResult coordinate_descent(const Standardized& s, double lambda, Vector b,
                            const McpOptions& opt) {
  const Index k = s.z.cols();
  const double n = static_cast<double>(s.z.rows());
  CdResult out;
  out.r = s.yc - s.z * b;
  for (std::size_t sweep = 1; sweep <= opt.max_sweeps; ++sweep) {
    double max_change = 0.0;
    for (Index j = 0; j < k; ++j) {
      const double zj = s.z.col(j).dot(out.r) / n + b(j);
      const double next = mcp_threshold(zj, lambda, opt.gamma);
      const double delta = next - b(j);
      if (delta != 0.0) {
        out.r -= delta * s.z.col(j);
        b(j) = next;
        max_change = std::max(max_change, std::abs(delta));
      }
    }
    out.objective.push_back(objective(out.r, b, lambda, opt.gamma));
    out.sweeps = sweep;
    if (max_change <= opt.tolerance) {
      out.converged = true;
      break;
    }
  }
  out.b = std::move(b);
  return out;
}

McpFit to_original_scale(const Standardized& s, const CdResult& cd, double lambda) {
  McpFit fit;
  fit.lambda = lambda;
  fit.sweeps = cd.sweeps;
  fit.objective = cd.objective;
  fit.coefficients = Vector::Zero(cd.b.size());
  for (Index j = 0; j < cd.b.size(); ++j)
    if (cd.b(j) != 0.0) fit.coefficients(j) = cd.b(j) / s.scale(j);
  fit.intercept = s.ybar - fit.coefficients.dot(s.mean);
  return fit;
}

void check_gamma(const McpOptions& opt) {
  if (!(opt.gamma > 1.0)) throw Error(Errc::invalid_argument, "MCP gamma must exceed 1");
}

}  // namespace

std::vector<Index> sis_screen(const Matrix& x, const Vector& y, Index keep) {
  if (keep < 1) throw Error(Errc::invalid_argument, "keep must be >= 1");
  const Standardized s = standardize(x, y);
  if (!(s.yc.squaredNorm() > 0.0)) throw Error(Errc::invalid_argument, "response is constant");
  const Vector score = (s.z.transpose() * s.yc).cwiseAbs();
  std::vector<Index> idx(static_cast<std::size_t>(x.cols()));
  std::iota(idx.begin(), idx.end(), Index{0});
  const auto cut = static_cast<std::ptrdiff_t>(std::min<Index>(keep, x.cols()));
  std::partial_sort(idx.begin(), idx.begin() + cut, idx.end(), [&](Index a, Index b) {
    return score(a) != score(b) ? score(a) > score(b) : a < b;
  });
  idx.resize(static_cast<std::size_t>(cut));
  std::sort(idx.begin(), idx.end());
  return idx;
}

double mcp_penalty(double t, double lambda, double gamma) {
  t = std::abs(t);
  if (t <= gamma * lambda) return lambda * t - t * t / (2.0 * gamma);
  return 0.5 * gamma * lambda * lambda;
}

double mcp_threshold(double z, double lambda, double gamma) {
  const double a = std::abs(z);
  if (a <= lambda) return 0.0;
  if (a <= gamma * lambda) return std::copysign((a - lambda) / (1.0 - 1.0 / gamma), z);
  return z;
}

double lambda_max(const Matrix& x, const Vector& y) {
  const Standardized s = standardize(x, y);
  return (s.z.transpose() * s.yc).cwiseAbs().maxCoeff() / static_cast<double>(x.rows());
}

McpFit mcp_fit(const Matrix& x, const Vector& y, double lambda, const McpOptions& options) {
  check_gamma(options);
  if (!(lambda >= 0.0)) throw Error(Errc::invalid_argument, "lambda must be >= 0");
  if (x.cols() >= x.rows()) throw Error(Errc::invalid_argument, "MCP fit needs fewer columns than rows");
  const Standardized s = standardize(x, y);
  const CdResult cd = coordinate_descent(s, lambda, Vector::Zero(x.cols()), options);
  McpFit fit = to_original_scale(s, cd, lambda);
  if (!cd.converged) throw NoConvergence(cd.sweeps, std::move(fit));
  return fit;
}

McpFit mcp_select(const Matrix& x, const Vector& y, const McpOptions& options) {
  check_gamma(options);
  if (options.path_length < 1) throw Error(Errc::invalid_argument, "empty lambda path");
  const Index n = x.rows();
  if (x.cols() >= n) throw Error(Errc::invalid_argument, "MCP fit needs fewer columns than rows");
  const Standardized s = standardize(x, y);
  const double top = (s.z.transpose() * s.yc).cwiseAbs().maxCoeff() / static_cast<double>(n);
  const double logn = std::log(static_cast<double>(n));
  if (options.ebic_gamma < 0.0) throw Error(Errc::invalid_argument, "ebic_gamma must be >= 0");
  const double pool = static_cast<double>(std::max(options.candidates, x.cols()));
  const auto log_choose = [&](Index k) {
    const double kk = static_cast<double>(k);
    return std::lgamma(pool + 1.0) - std::lgamma(kk + 1.0) - std::lgamma(pool - kk + 1.0);
  };

  McpFit best;
  double best_bic = std::numeric_limits<double>::infinity();
  Vector warm = Vector::Zero(x.cols());
  for (Index step = 0; step < options.path_length; ++step) {
    const double frac = options.path_length == 1
                            ? 0.0
                            : static_cast<double>(step) / static_cast<double>(options.path_length - 1);
    const double lambda = top * std::pow(options.lambda_min_ratio, frac);
    const CdResult cd = coordinate_descent(s, lambda, warm, options);
    warm = cd.b;
    const Index size = static_cast<Index>(support_of(cd.b).size());
    if (size >= n - 1) break;
    const double rss = std::max(cd.r.squaredNorm(), std::numeric_limits<double>::min());
    const double bic = static_cast<double>(n) * std::log(rss / static_cast<double>(n)) +
                       static_cast<double>(size) * logn + 2.0 * options.ebic_gamma * log_choose(size);
    if (bic < best_bic) {
      best_bic = bic;
      best = to_original_scale(s, cd, lambda);
    }
  }
  if (!std::isfinite(best_bic)) {
    // Only possible if the very first lambda already saturates the support.
    const CdResult cd = coordinate_descent(s, top, Vector::Zero(x.cols()), options);
    best = to_original_scale(s, cd, top);
  }
  return best;
}

double estimate_sigma2(const Vector& residuals, Index support_size) {
  const Index dof = residuals.size() - support_size - 1;
  if (dof < 1) throw Error(Errc::degenerate_dof, "n - |support| - 1 must be >= 1");
  return std::max(residuals.squaredNorm() / static_cast<double>(dof), kSigma2Floor);
}

namespace {

McpFit fit_columns(const Matrix& x, const Vector& y, const std::vector<Index>& cols,
                   const McpOptions& options) {
  Matrix sub(x.rows(), static_cast<Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) sub.col(static_cast<Index>(c)) = x.col(cols[c]);
  return mcp_select(sub, y, options);
}

// Columns outside `exclude` ranked by |correlation with r|, best `count` kept.
std::vector<Index> screen_residual(const Matrix& x, const Vector& r, const std::vector<Index>& exclude,
                                   Index count) {
  std::vector<Index> rest;
  for (Index j = 0; j < x.cols(); ++j)
    if (!std::binary_search(exclude.begin(), exclude.end(), j)) rest.push_back(j);
  if (count <= 0 || rest.empty() || !(r.squaredNorm() > 0.0)) return {};
  Matrix sub(x.rows(), static_cast<Index>(rest.size()));
  for (std::size_t c = 0; c < rest.size(); ++c) sub.col(static_cast<Index>(c)) = x.col(rest[c]);
  std::vector<Index> picked;
  for (Index c : sis_screen(sub, r, count)) picked.push_back(rest[static_cast<std::size_t>(c)]);
  return picked;
}

}  // namespace

RegressionEstimate sis_mcp(const Matrix& x, const Vector& y, Index keep, const McpOptions& options,
                           int rounds) {
  if (rounds < 1) throw Error(Errc::invalid_argument, "rounds must be >= 1");
  const Index n = x.rows();
  if (keep <= 0) keep = ggm::default_cap(n);
  keep = std::min<Index>(keep, n - 2);
  McpOptions opt = options;
  if (opt.candidates <= 0) opt.candidates = x.cols();

  std::vector<Index> active = sis_screen(x, y, keep);
  McpFit fit = fit_columns(x, y, active, opt);
  std::vector<Index> chosen;
  for (int round = 1;; ++round) {
    std::vector<Index> next;
    for (std::size_t c = 0; c < active.size(); ++c)
      if (fit.coefficients(static_cast<Index>(c)) != 0.0) next.push_back(active[c]);
    if (round > 1 && next == chosen) break;
    chosen = std::move(next);
    if (round >= rounds) break;

    Vector r = y.array() - fit.intercept;
    for (std::size_t c = 0; c < active.size(); ++c) r -= fit.coefficients(static_cast<Index>(c)) * x.col(active[c]);
    std::vector<Index> grown = chosen;
    for (Index j : screen_residual(x, r, chosen, keep - static_cast<Index>(chosen.size())))
      grown.push_back(j);
    std::sort(grown.begin(), grown.end());
    if (grown == active) break;
    active = std::move(grown);
    fit = fit_columns(x, y, active, opt);
  }

  RegressionEstimate est;
  est.intercept = fit.intercept;
  est.coefficients = Vector::Zero(x.cols());
  for (std::size_t c = 0; c < active.size(); ++c)
    est.coefficients(active[c]) = fit.coefficients(static_cast<Index>(c));
  est.support = support_of(est.coefficients);
  est.sigma2 = estimate_sigma2(est.residuals(x, y), static_cast<Index>(est.support.size()));
  return est;
}

ggm::ConditionalNormalParams covariate_posterior(double prior_mean, double prior_variance,
                                                 double beta_k, double sigma2,
                                                 double partial_residual) {
  if (beta_k == 0.0) return {prior_mean, prior_variance};
  if (!(sigma2 > 0.0) || !(prior_variance > 0.0))
    throw Error(Errc::invalid_argument, "variances must be positive");
  const double precision = 1.0 / prior_variance + beta_k * beta_k / sigma2;
  const double variance = 1.0 / precision;
  const double mean = variance * (prior_mean / prior_variance + beta_k * partial_residual / sigma2);
  return {mean, variance};
}

namespace {

double partial_residual(const Eigen::Ref<const Eigen::RowVectorXd>& row, Index k,
                        const RegressionEstimate& fit, double y) {
  double r = y - fit.intercept;
  for (Index j : fit.support)
    if (j != k) r -= fit.coefficients(j) * row(j);
  return r;
}

}  // namespace

double impute_covariate(const Eigen::Ref<const Eigen::RowVectorXd>& row, Index k,
                        const RegressionEstimate& fit, const ggm::ImputationPlan& plan, double y,
                        Rng& rng) {
  const auto prior = plan.conditional(k, row);
  const auto post = covariate_posterior(prior.mean, prior.variance, fit.coefficients(k), fit.sigma2,
                                        partial_residual(row, k, fit, y));
  return ggm::draw(post, rng);
}

RegressionModel::RegressionModel(Vector y, RegressionOptions options)
    : y_(std::move(y)), options_(std::move(options)) {
  if (!y_.allFinite())
    throw Error(Errc::non_finite_value, "response must be fully observed and finite");
}

std::vector<BlockSpec> RegressionModel::blocks() const {
  return {{"beta", 1, 1}, {"sigma2", 1, 2}, {"graph", 1, 3}};
}

RegressionParams RegressionModel::initial_params(const IncompleteMatrix& filled) const {
  if (filled.rows() != y_.size()) throw Error(Errc::dimension_mismatch, "X rows differ from y length");
  RegressionParams params;
  params.fit.intercept = y_.mean();
  params.fit.coefficients = Vector::Zero(filled.cols());
  params.fit.sigma2 = std::max((y_.array() - y_.mean()).square().sum() / static_cast<double>(y_.size() - 1),
                               kSigma2Floor);
  const Index p = filled.cols();
  params.graph.adjacency = BoolMatrix::Constant(p, p, false);
  params.graph.scores = Matrix::Zero(p, p);
  params.graph.neighborhood_cap =
      options_.graph.cap > 0 ? options_.graph.cap : ggm::default_cap(filled.rows());
  return params;
}

RegressionParams RegressionModel::estimate_complete_cases(const IncompleteMatrix& data) const {
  std::vector<Index> rows;
  for (Index i = 0; i < data.rows(); ++i)
    if (data.missing_in_row(i).empty()) rows.push_back(i);
  const Index m = static_cast<Index>(rows.size());
  if (m < 10) throw Error(Errc::invalid_argument, "too few complete cases for a C-step-first start");
  Matrix sub(m, data.cols());
  Vector ysub(m);
  for (Index r = 0; r < m; ++r) {
    sub.row(r) = data.values().row(rows[static_cast<std::size_t>(r)]);
    ysub(r) = y_(rows[static_cast<std::size_t>(r)]);
  }
  RegressionParams params;
  params.fit = sis_mcp(sub, ysub, std::min<Index>(options_.keep > 0 ? options_.keep : ggm::default_cap(m), m - 2),
                       options_.mcp, options_.sis_rounds);
  ggm::GgmOptions gopt = options_.graph;
  gopt.cap = std::min<Index>(gopt.cap > 0 ? gopt.cap : ggm::default_cap(data.rows()), m - 4);
  params.graph = ggm::learn_graph(sub, gopt);
  return params;
}

void RegressionModel::update_block(std::size_t block, const IncompleteMatrix& data,
                                   RegressionParams& params, Rng&) const {
  const Matrix& x = data.imputed();
  switch (block) {
    case 0: {
      const double sigma2 = params.fit.sigma2;
      params.fit = sis_mcp(x, y_, options_.keep, options_.mcp, options_.sis_rounds);
      params.fit.sigma2 = sigma2;
      break;
    }
    case 1:
      params.fit.sigma2 = estimate_sigma2(params.fit.residuals(x, y_),
                                          static_cast<Index>(params.fit.support.size()));
      break;
    case 2:
      params.graph = ggm::learn_graph(x, options_.graph);
      break;
    default:
      throw Error(Errc::invalid_argument, "unknown block");
  }
}

IncompleteMatrix RegressionModel::impute(const IncompleteMatrix& data, const RegressionParams& params,
                                         Rng& rng) const {
  if (data.missing_count() == 0) return data;
  std::vector<Index> cols;
  for (Index j = 0; j < data.cols(); ++j)
    if (data.observed_in_col(j) < static_cast<std::size_t>(data.rows())) cols.push_back(j);
  const ggm::ImputationPlan plan(ggm::sample_moments(data.imputed()), params.graph, cols);
  const std::uint64_t base = rng();
  Matrix overlay = data.imputed();
  for_each_index(data.rows(), options_.graph.exec, [&](Index i) {
    const auto& missing = data.missing_in_row(i);
    if (missing.empty()) return;
    Rng row_rng = make_rng(base, {static_cast<std::uint64_t>(i)});
    Eigen::RowVectorXd row = overlay.row(i);
    for (Index k : missing) row(k) = impute_covariate(row, k, params.fit, plan, y_(i), row_rng);
    overlay.row(i) = row;
  });
  return data.with_imputed(std::move(overlay));
}

Vector RegressionModel::flatten(const RegressionParams& params) const {
  const Index p = params.fit.coefficients.size();
  Vector out(p + 2);
  out.head(p + 1) = params.fit.beta();
  out(p + 1) = params.fit.sigma2;
  return out;
}

SelectionReport selection_report(const ChainTrace& trace, Index p, int threshold) {
  if (trace.dimension() != p + 2)
    throw Error(Errc::dimension_mismatch, "trace layout does not match p");
  const auto window = trace.window();
  if (window.empty()) throw Error(Errc::empty_window, "no snapshots after burn-in");
  SelectionReport rep;
  rep.threshold = threshold;
  rep.window = window.size();
  rep.counts.assign(static_cast<std::size_t>(p), 0);
  for (const auto* s : window)
    for (Index j = 0; j < p; ++j)
      if (s->payload(j + 1) != 0.0) ++rep.counts[static_cast<std::size_t>(j)];
  for (Index j = 0; j < p; ++j)
    if (rep.counts[static_cast<std::size_t>(j)] >= threshold) rep.selected.push_back(j);
  return rep;
}

IccRegressionResult summarize(const ChainTrace& trace, Index p, int threshold) {
  IccRegressionResult out;
  const Vector avg = chain_average(trace);
  out.beta = avg.head(p + 1);
  out.sigma2 = avg(p + 1);
  out.report = selection_report(trace, p, threshold);
  out.trace = trace;
  return out;
}

IccRegressionResult icc_regression(const IncompleteMatrix& x, const Vector& y, const EngineConfig& cfg,
                                   const RegressionOptions& options) {
  const RegressionModel model(y, options);
  return summarize(run_icc(model, x, cfg), x.cols(), options.selection_threshold);
}

}  // namespace icfit::regselect
