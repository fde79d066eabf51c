#include "icfit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>

namespace icfit::metrics {

PrCurve pr_curve(const Matrix& scores, const BoolMatrix& truth) {
  const Index p = scores.rows();
  if (scores.cols() != p || truth.rows() != p || truth.cols() != p)
    throw Error(Errc::dimension_mismatch, "scores and truth must be square and equal in size");
  if (!scores.allFinite()) throw Error(Errc::non_finite_value, "scores must be finite");

  struct Pair {
    double score;
    bool edge;
  };
  std::vector<Pair> pairs;
  pairs.reserve(static_cast<std::size_t>(p * (p - 1) / 2));
  std::size_t true_edges = 0;
  for (Index i = 0; i < p; ++i)
    for (Index j = i + 1; j < p; ++j) {
      pairs.push_back({std::abs(scores(i, j)), truth(i, j)});
      true_edges += truth(i, j) ? 1 : 0;
    }
  if (true_edges == 0) throw Error(Errc::no_true_edges, "truth has no edges");
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) { return a.score > b.score; });

  PrCurve curve;
  curve.points.push_back({std::numeric_limits<double>::infinity(), 1.0, 0.0});
  std::size_t retrieved = 0;
  std::size_t hits = 0;
  for (std::size_t k = 0; k < pairs.size();) {
    const double t = pairs[k].score;
    for (; k < pairs.size() && pairs[k].score == t; ++k) {
      ++retrieved;
      hits += pairs[k].edge ? 1 : 0;
    }
    curve.points.push_back({t, static_cast<double>(hits) / static_cast<double>(retrieved),
                            static_cast<double>(hits) / static_cast<double>(true_edges)});
  }
  curve.auc = trapezoid_auc(curve.points);
  return curve;
}

double trapezoid_auc(const std::vector<PrPoint>& points) {
  double area = 0.0;
  for (std::size_t k = 1; k < points.size(); ++k)
    area += (points[k].recall - points[k - 1].recall) *
            (points[k].precision + points[k - 1].precision) / 2.0;
  return area;
}

SelectionMetrics selection_metrics(const Vector& beta_hat, const std::vector<Index>& selected,
                                   const Vector& truth_beta, const std::vector<Index>& truth_set) {
  if (beta_hat.size() != truth_beta.size())
    throw Error(Errc::dimension_mismatch, "estimate and truth differ in length");
  if (truth_set.empty()) throw Error(Errc::invalid_argument, "true support must be nonempty");
  const std::set<Index> s(selected.begin(), selected.end());
  const std::set<Index> t(truth_set.begin(), truth_set.end());
  std::size_t false_pos = 0;
  for (Index k : s) false_pos += t.count(k) ? 0 : 1;
  std::size_t missed = 0;
  for (Index k : t) missed += s.count(k) ? 0 : 1;
  SelectionMetrics m;
  m.err2 = (beta_hat - truth_beta).squaredNorm();
  m.fsr = s.empty() ? 0.0 : static_cast<double>(false_pos) / static_cast<double>(s.size());
  m.nsr = static_cast<double>(missed) / static_cast<double>(t.size());
  return m;
}

double lag_autocorrelation(std::span<const double> series, std::size_t lag) {
  const std::size_t m = series.size();
  if (m <= lag + 2)
    throw Error(Errc::invalid_argument,
                "series of length " + std::to_string(m) + " is too short for lag " +
                    std::to_string(lag));
  const double mean = std::accumulate(series.begin(), series.end(), 0.0) / static_cast<double>(m);
  double denom = 0.0;
  for (double v : series) denom += (v - mean) * (v - mean);
  if (!(denom > 0.0)) return 0.0;
  double num = 0.0;
  for (std::size_t t = lag; t < m; ++t) num += (series[t] - mean) * (series[t - lag] - mean);
  return num / denom;
}

double batch_means_se(std::span<const double> series) {
  const std::size_t m = series.size();
  const auto batches = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(m))));
  if (batches < 2) throw Error(Errc::invalid_argument, "series too short for batch means");
  const std::size_t size = m / batches;
  std::vector<double> means(batches);
  for (std::size_t b = 0; b < batches; ++b) {
    const auto first = series.begin() + static_cast<std::ptrdiff_t>(b * size);
    means[b] = std::accumulate(first, first + static_cast<std::ptrdiff_t>(size), 0.0) /
               static_cast<double>(size);
  }
  return mean_sd(means).sd / std::sqrt(static_cast<double>(batches));
}

MeanSd mean_sd(std::span<const double> values) {
  if (values.empty()) throw Error(Errc::invalid_argument, "no values to summarize");
  const double n = static_cast<double>(values.size());
  MeanSd out;
  out.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.sd = std::sqrt(ss / (n - 1.0));
  }
  return out;
}

}  // namespace icfit::metrics
