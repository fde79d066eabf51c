#include "icfit/ggm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

namespace icfit::ggm {

std::vector<Index> GraphEstimate::neighbors(Index j) const {
  std::vector<Index> out;
  for (Index k = 0; k < adjacency.cols(); ++k)
    if (adjacency(j, k)) out.push_back(k);
  return out;
}

Index default_cap(Index n) {
  if (n < 3) throw Error(Errc::invalid_argument, "need at least 3 samples");
  return static_cast<Index>(std::ceil(static_cast<double>(n) / std::log(static_cast<double>(n))));
}

Matrix correlation_matrix(const Matrix& data, Execution exec) {
  const Index p = data.cols();
  Matrix centered = data.rowwise() - data.colwise().mean();
  Vector norms = centered.colwise().norm().transpose();
  for (Index j = 0; j < p; ++j)
    if (!(norms(j) > 0.0) || !std::isfinite(norms(j)))
      throw Error(Errc::degenerate_column, "column " + std::to_string(j) + " has zero variance",
                  static_cast<std::size_t>(j));
  for (Index j = 0; j < p; ++j) centered.col(j) /= norms(j);

  Matrix corr(p, p);
  for_each_index(p, exec, [&](Index j) {
    corr.col(j).head(j + 1).noalias() = centered.leftCols(j + 1).transpose() * centered.col(j);
  });
  for (Index j = 0; j < p; ++j) {
    corr(j, j) = 1.0;
    for (Index i = 0; i < j; ++i) corr(j, i) = corr(i, j);
  }
  return corr;
}

Neighborhoods screen_from_correlation(const Matrix& corr, Index cap) {
  if (cap < 1) throw Error(Errc::invalid_argument, "neighborhood cap must be >= 1");
  const Index p = corr.rows();
  Neighborhoods hoods(static_cast<std::size_t>(p));
  std::vector<Index> others;
  for (Index j = 0; j < p; ++j) {
    others.clear();
    for (Index k = 0; k < p; ++k)
      if (k != j) others.push_back(k);
    const auto keep = static_cast<std::ptrdiff_t>(std::min<Index>(cap, p - 1));
    std::partial_sort(others.begin(), others.begin() + keep, others.end(), [&](Index a, Index b) {
      const double ra = std::abs(corr(j, a));
      const double rb = std::abs(corr(j, b));
      return ra != rb ? ra > rb : a < b;
    });
    hoods[static_cast<std::size_t>(j)].assign(others.begin(), others.begin() + keep);
  }
  return hoods;
}

Neighborhoods screen_neighborhoods(const Matrix& data, Index cap, Execution exec) {
  if (data.rows() < 3) throw Error(Errc::invalid_argument, "need at least 3 samples");
  return screen_from_correlation(correlation_matrix(data, exec), cap);
}

std::vector<Index> conditioning_set(const Matrix& corr, const Neighborhoods& hoods, Index i,
                                    Index j, Index limit) {
  std::vector<Index> set;
  for (Index k : hoods[static_cast<std::size_t>(i)])
    if (k != j) set.push_back(k);
  for (Index k : hoods[static_cast<std::size_t>(j)])
    if (k != i) set.push_back(k);
  std::sort(set.begin(), set.end());
  set.erase(std::unique(set.begin(), set.end()), set.end());
  limit = std::max<Index>(limit, 0);
  if (static_cast<Index>(set.size()) > limit) {
    auto strength = [&](Index k) { return std::max(std::abs(corr(i, k)), std::abs(corr(j, k))); };
    std::partial_sort(set.begin(), set.begin() + limit, set.end(), [&](Index a, Index b) {
      const double sa = strength(a);
      const double sb = strength(b);
      return sa != sb ? sa > sb : a < b;
    });
    set.resize(static_cast<std::size_t>(limit));
    std::sort(set.begin(), set.end());
  }
  return set;
}

double partial_correlation(const Matrix& corr, Index i, Index j, std::span<const Index> given) {
  const Index s = static_cast<Index>(given.size());
  double a = corr(i, i);
  double b = corr(j, j);
  double c = corr(i, j);
  if (s > 0) {
    Matrix rss(s, s);
    Matrix cross(s, 2);
    for (Index u = 0; u < s; ++u) {
      for (Index v = 0; v < s; ++v) rss(u, v) = corr(given[u], given[v]);
      cross(u, 0) = corr(given[u], i);
      cross(u, 1) = corr(given[u], j);
    }
    Eigen::LLT<Matrix> llt(rss);
    bool singular = llt.info() != Eigen::Success;
    if (!singular) singular = llt.matrixLLT().diagonal().array().square().minCoeff() < 1e-10;
    if (singular) {
      const double ridge = 1e-6 * rss.trace() / static_cast<double>(s);
      rss.diagonal().array() += ridge;
      llt.compute(rss);
      if (llt.info() != Eigen::Success)
        throw Error(Errc::factorization_failure, "conditioning block not factorizable");
    }
    const Matrix w = llt.matrixL().solve(cross);
    a -= w.col(0).squaredNorm();
    b -= w.col(1).squaredNorm();
    c -= w.col(0).dot(w.col(1));
  }
  if (!(a > 0.0) || !(b > 0.0)) return 0.0;
  return c / std::sqrt(a * b);
}

double fisher_score(double r, Index n, Index given_size) {
  const double dof = static_cast<double>(n - given_size - 3);
  if (dof < 0.0) throw Error(Errc::invalid_argument, "conditioning set too large for sample size");
  const double clamped = std::clamp(r, -kCorrelationClamp, kCorrelationClamp);
  return std::sqrt(dof) * std::atanh(clamped);
}

Matrix psi_scores_from_correlation(const Matrix& corr, Index n, const Neighborhoods& hoods,
                                   Index cap, Execution exec) {
  const Index p = corr.rows();
  if (static_cast<Index>(hoods.size()) != p)
    throw Error(Errc::dimension_mismatch, "one neighborhood per node required");
  const Index limit = std::min<Index>(cap, n - 4);
  Matrix scores = Matrix::Zero(p, p);
  // Rows of the upper triangle shrink with i; dynamic scheduling evens it out.
  for_each_index(p, exec, [&](Index i) {
    for (Index j = i + 1; j < p; ++j) {
      const auto given = conditioning_set(corr, hoods, i, j, limit);
      const double r = partial_correlation(corr, i, j, given);
      scores(i, j) = fisher_score(r, n, static_cast<Index>(given.size()));
    }
  });
  for (Index j = 0; j < p; ++j)
    for (Index i = 0; i < j; ++i) scores(j, i) = scores(i, j);
  return scores;
}

Matrix psi_scores(const Matrix& data, const Neighborhoods& hoods, Index cap, Execution exec) {
  return psi_scores_from_correlation(correlation_matrix(data, exec), data.rows(), hoods, cap, exec);
}

GraphEstimate threshold_graph(const Matrix& scores, double q, Index cap) {
  if (scores.rows() != scores.cols()) throw Error(Errc::dimension_mismatch, "scores must be square");
  if (!(q > 0.0 && q < 1.0)) throw Error(Errc::invalid_argument, "q must lie in (0, 1)");
  if (cap < 1) throw Error(Errc::invalid_argument, "neighborhood cap must be >= 1");
  if (!scores.allFinite()) throw Error(Errc::non_finite_value, "scores must be finite");
  const Index p = scores.rows();

  struct Pair {
    Index i, j;
    double pvalue;
    double strength;
  };
  std::vector<Pair> pairs;
  pairs.reserve(static_cast<std::size_t>(p * (p - 1) / 2));
  for (Index i = 0; i < p; ++i)
    for (Index j = i + 1; j < p; ++j) {
      const double z = std::abs(scores(i, j));
      pairs.push_back({i, j, std::erfc(z / std::sqrt(2.0)), z});
    }
  std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    return a.strength > b.strength;
  });

  const double m = static_cast<double>(pairs.size());
  std::size_t accepted = 0;
  for (std::size_t k = 0; k < pairs.size(); ++k)
    if (pairs[k].pvalue <= static_cast<double>(k + 1) * q / m) accepted = k + 1;

  GraphEstimate g;
  g.scores = scores;
  g.neighborhood_cap = cap;
  g.adjacency = BoolMatrix::Constant(p, p, false);
  std::vector<Index> degree(static_cast<std::size_t>(p), 0);
  for (std::size_t k = 0; k < accepted; ++k) {
    const auto& e = pairs[k];
    auto& di = degree[static_cast<std::size_t>(e.i)];
    auto& dj = degree[static_cast<std::size_t>(e.j)];
    if (di >= cap || dj >= cap) continue;
    g.adjacency(e.i, e.j) = g.adjacency(e.j, e.i) = true;
    ++di;
    ++dj;
  }
  return g;
}

Vector pack_upper(const Matrix& symmetric) {
  const Index p = symmetric.rows();
  Vector out(p * (p - 1) / 2);
  Index k = 0;
  for (Index i = 0; i < p; ++i)
    for (Index j = i + 1; j < p; ++j) out(k++) = symmetric(i, j);
  return out;
}

Matrix unpack_upper(const Vector& packed, Index p) {
  if (packed.size() != p * (p - 1) / 2)
    throw Error(Errc::dimension_mismatch, "packed length does not match p");
  Matrix out = Matrix::Zero(p, p);
  Index k = 0;
  for (Index i = 0; i < p; ++i)
    for (Index j = i + 1; j < p; ++j) out(i, j) = out(j, i) = packed(k++);
  return out;
}

Matrix average_psi(std::span<const Matrix> scores) {
  if (scores.empty()) throw Error(Errc::empty_window, "no score matrices to average");
  Matrix sum = Matrix::Zero(scores.front().rows(), scores.front().cols());
  for (const auto& s : scores) {
    if (s.rows() != sum.rows() || s.cols() != sum.cols())
      throw Error(Errc::dimension_mismatch, "score matrices differ in size");
    sum += s;
  }
  return sum / static_cast<double>(scores.size());
}

Moments sample_moments(const Matrix& data) {
  if (data.rows() < 2) throw Error(Errc::invalid_argument, "need at least two rows for moments");
  Moments m;
  m.mean = data.colwise().mean().transpose();
  const Matrix centered = data.rowwise() - m.mean.transpose();
  m.cov = centered.transpose() * centered / static_cast<double>(data.rows() - 1);
  return m;
}

ImputationPlan::ImputationPlan(const Moments& moments, const GraphEstimate& graph,
                               std::span<const Index> columns)
    : mean_(moments.mean) {
  const Index p = moments.mean.size();
  if (graph.nodes() != p || graph.adjacency.rows() != p)
    throw Error(Errc::dimension_mismatch, "graph and data differ in node count");
  entries_.resize(static_cast<std::size_t>(p));
  std::vector<Index> all;
  if (columns.empty()) {
    all.resize(static_cast<std::size_t>(p));
    std::iota(all.begin(), all.end(), Index{0});
    columns = all;
  }
  for (Index j : columns) {
    Entry& e = entries_[static_cast<std::size_t>(j)];
    if (e.built) continue;
    e.built = true;
    e.omega = graph.neighbors(j);
    const double sj2 = moments.cov(j, j);
    const Index w = static_cast<Index>(e.omega.size());
    if (w == 0) {
      e.variance = sj2;
      continue;
    }
    Matrix sww(w, w);
    Vector swj(w);
    for (Index u = 0; u < w; ++u) {
      swj(u) = moments.cov(e.omega[u], j);
      for (Index v = 0; v < w; ++v) sww(u, v) = moments.cov(e.omega[u], e.omega[v]);
    }
    Eigen::SelfAdjointEigenSolver<Matrix> eig(sww, Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() < kEigenFloor)
      sww.diagonal().array() += kRidge * sww.trace() / static_cast<double>(w);
    Eigen::LDLT<Matrix> ldlt(sww);
    if (ldlt.info() != Eigen::Success)
      throw Error(Errc::factorization_failure, "neighborhood covariance not factorizable",
                  static_cast<std::size_t>(j));
    e.coef = ldlt.solve(swj);
    e.variance = std::max(sj2 - swj.dot(e.coef), kVarianceFloor * sj2);
  }
}

const ImputationPlan::Entry& ImputationPlan::entry(Index j) const {
  const Entry& e = entries_.at(static_cast<std::size_t>(j));
  if (!e.built) throw Error(Errc::invalid_argument, "imputation plan has no entry for column");
  return e;
}

ConditionalNormalParams ImputationPlan::conditional(
    Index j, const Eigen::Ref<const Eigen::RowVectorXd>& row) const {
  const Entry& e = entry(j);
  double mean = mean_(j);
  for (std::size_t u = 0; u < e.omega.size(); ++u) {
    const Index k = e.omega[u];
    mean += e.coef(static_cast<Index>(u)) * (row(k) - mean_(k));
  }
  return {mean, e.variance};
}

double draw(const ConditionalNormalParams& params, Rng& rng) {
  if (!(params.variance > 0.0)) return params.mean;
  return draw_normal(rng, params.mean, std::sqrt(params.variance));
}

namespace {

std::vector<Index> columns_with_missing(const IncompleteMatrix& data) {
  std::vector<Index> cols;
  for (Index j = 0; j < data.cols(); ++j)
    if (data.observed_in_col(j) < static_cast<std::size_t>(data.rows())) cols.push_back(j);
  return cols;
}

}  // namespace

IncompleteMatrix impute_ggm(const IncompleteMatrix& data, const GraphEstimate& graph, Rng& rng,
                            Execution exec) {
  if (data.missing_count() == 0) return data;
  if (!data.fully_imputed())
    throw Error(Errc::invalid_argument, "I-step needs a fully filled overlay");
  const auto cols = columns_with_missing(data);
  const ImputationPlan plan(sample_moments(data.imputed()), graph, cols);
  const std::uint64_t base = rng();
  Matrix overlay = data.imputed();
  for_each_index(data.rows(), exec, [&](Index i) {
    const auto& missing = data.missing_in_row(i);
    if (missing.empty()) return;
    Rng row_rng = make_rng(base, {static_cast<std::uint64_t>(i)});
    Eigen::RowVectorXd row = overlay.row(i);
    for (Index j : missing) row(j) = draw(plan.conditional(j, row), row_rng);
    overlay.row(i) = row;
  });
  return data.with_imputed(std::move(overlay));
}

GraphEstimate learn_graph(const Matrix& data, const GgmOptions& options) {
  const Index n = data.rows();
  const Index cap = options.cap > 0 ? options.cap : default_cap(n);
  const Matrix corr = correlation_matrix(data, options.exec);
  const auto hoods = screen_from_correlation(corr, cap);
  const Matrix scores = psi_scores_from_correlation(corr, n, hoods, cap, options.exec);
  return threshold_graph(scores, options.q, cap);
}

GraphEstimate GgmModel::estimate(const IncompleteMatrix& data) const {
  return learn_graph(data.imputed(), options_);
}

GraphEstimate GgmModel::estimate_complete_cases(const IncompleteMatrix& data) const {
  std::vector<Index> rows;
  for (Index i = 0; i < data.rows(); ++i)
    if (data.missing_in_row(i).empty()) rows.push_back(i);
  if (rows.size() < 5)
    throw Error(Errc::invalid_argument, "too few complete cases for a C-step-first start");
  Matrix sub(static_cast<Index>(rows.size()), data.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) sub.row(static_cast<Index>(r)) = data.values().row(rows[r]);
  GgmOptions opts = options_;
  if (opts.cap == 0) opts.cap = default_cap(data.rows());
  opts.cap = std::min<Index>(opts.cap, std::max<Index>(1, sub.rows() - 4));
  return learn_graph(sub, opts);
}

IncompleteMatrix GgmModel::impute(const IncompleteMatrix& data, const Params& graph, Rng& rng) const {
  return impute_ggm(data, graph, rng, options_.exec);
}

}  // namespace icfit::ggm
