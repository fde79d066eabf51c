#pragma once

#include <limits>
#include <span>
#include <vector>

#include "icfit/core.hpp"

namespace icfit::metrics {

struct PrPoint {
  double threshold = 0.0;
  double precision = 1.0;
  double recall = 0.0;
};

struct PrCurve {
  // Starts at the anchor (threshold +inf, precision 1, recall 0), then one
  // point per distinct |score| in decreasing order.
  std::vector<PrPoint> points;
  double auc = 0.0;  // trapezoid over recall through the stored points
};

// Edges are the upper-triangle pairs; an edge is retrieved at threshold t when
// |score| >= t. Precision of an empty retrieval is 1. Throws no_true_edges
// when the truth has no edge.
PrCurve pr_curve(const Matrix& scores, const BoolMatrix& truth);

double trapezoid_auc(const std::vector<PrPoint>& points);

struct SelectionMetrics {
  double err2 = 0.0;  // ||beta_hat - beta||^2 including the intercept
  double fsr = 0.0;   // |s \ s*| / |s|, 0 when s is empty
  double nsr = 0.0;   // |s* \ s| / |s*|
};

// Selected sets hold covariate indices (0-based, intercept excluded).
SelectionMetrics selection_metrics(const Vector& beta_hat, const std::vector<Index>& selected,
                                   const Vector& truth_beta, const std::vector<Index>& truth_set);

// Sample autocorrelation at `lag` with the usual 1/m normalization. A constant
// series gives 0. Requires size > lag + 2.
double lag_autocorrelation(std::span<const double> series, std::size_t lag);

// Standard error of the mean of a correlated series by non-overlapping batch
// means with floor(sqrt(m)) batches.
double batch_means_se(std::span<const double> series);

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;  // n - 1 denominator, 0 for a single value
};

MeanSd mean_sd(std::span<const double> values);

}  // namespace icfit::metrics
