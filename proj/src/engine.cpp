#include "icfit/engine.hpp"

#include <cmath>
#include <exception>
#include <limits>

#include <omp.h>

namespace icfit {

void EngineConfig::validate() const {
  if (iterations < 1) throw Error(Errc::invalid_argument, "iterations must be positive");
  if (burn_in >= iterations) throw Error(Errc::invalid_argument, "burn_in must be < iterations");
  if (chains < 1) throw Error(Errc::invalid_argument, "chains must be positive");
}

std::vector<std::size_t> block_schedule(const std::vector<BlockSpec>& blocks) {
  const std::size_t k = blocks.size();
  if (k == 0) throw Error(Errc::invalid_argument, "model declares no blocks");
  std::vector<std::size_t> order(k, k);
  for (std::size_t b = 0; b < k; ++b) {
    const int rank = blocks[b].update_order;
    if (rank < 1 || static_cast<std::size_t>(rank) > k || order[static_cast<std::size_t>(rank - 1)] != k)
      throw Error(Errc::invalid_argument, "block update orders must be a permutation of 1..k");
    if (blocks[b].dimension < 1)
      throw Error(Errc::invalid_argument, "block '" + blocks[b].name + "' has no dimension");
    order[static_cast<std::size_t>(rank - 1)] = b;
  }
  return order;
}

double gelman_rubin(const std::vector<ChainTrace>& traces, Index coordinate) {
  if (traces.size() < 2) throw Error(Errc::insufficient_chains, "need at least two chains");
  const Index dim = traces.front().dimension();
  std::vector<Vector> series;
  series.reserve(traces.size());
  for (const auto& t : traces) {
    if (t.dimension() != dim) throw Error(Errc::dimension_mismatch, "chains differ in dimension");
    series.push_back(t.coordinate_series(coordinate));
  }
  const Index m = series.front().size();
  for (const auto& s : series)
    if (s.size() != m) throw Error(Errc::dimension_mismatch, "chains differ in length");
  if (m < 2) throw Error(Errc::empty_window, "need at least two post-burn-in samples per chain");

  const double chains = static_cast<double>(series.size());
  const double len = static_cast<double>(m);
  Vector means(static_cast<Index>(series.size()));
  double within = 0.0;
  for (std::size_t c = 0; c < series.size(); ++c) {
    const double mean = series[c].mean();
    means(static_cast<Index>(c)) = mean;
    within += (series[c].array() - mean).square().sum() / (len - 1.0);
  }
  within /= chains;
  const double grand = means.mean();
  const double between = len * (means.array() - grand).square().sum() / (chains - 1.0);

  if (within == 0.0) return between == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
  const double pooled = (len - 1.0) / len * within + between / len;
  return std::sqrt(pooled / within);
}

namespace detail {

namespace {
std::string describe_current() {
  try {
    throw;
  } catch (const std::exception& e) {
    return e.what();
  } catch (...) {
    return "unknown error";
  }
}
}  // namespace

void rethrow_as_estimator_failure(std::size_t iteration) {
  throw Error(Errc::estimator_failure,
              "estimator failed at iteration " + std::to_string(iteration) + ": " + describe_current(),
              iteration);
}

void rethrow_as_block_failure(const std::string& block, std::size_t iteration) {
  throw Error(Errc::block_failure,
              "block '" + block + "' failed at iteration " + std::to_string(iteration) + ": " +
                  describe_current(),
              iteration);
}

}  // namespace detail

void set_thread_limit(int threads) {
  if (threads >= 1) omp_set_num_threads(threads);
}

int thread_limit() { return omp_get_max_threads(); }

}  // namespace icfit
