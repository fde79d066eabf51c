#include <cmath>
#include <cstring>
#include <limits>

#include <gtest/gtest.h>

#include "icfit/engine.hpp"

using namespace icfit;

namespace {

constexpr double NA = std::numeric_limits<double>::quiet_NaN();

// Column means as parameters; missing cells are redrawn around them.
struct MeanModel {
  using Params = Vector;
  int fail_at_call = -1;
  mutable int calls = 0;

  Params estimate(const IncompleteMatrix& data) const {
    if (++calls == fail_at_call) throw std::runtime_error("boom");
    return data.imputed().colwise().mean().transpose();
  }
  Params estimate_complete_cases(const IncompleteMatrix& data) const {
    Vector sum = Vector::Zero(data.cols());
    double rows = 0.0;
    for (Index i = 0; i < data.rows(); ++i)
      if (data.missing_in_row(i).empty()) {
        sum += data.values().row(i).transpose();
        rows += 1.0;
      }
    return sum / rows;
  }
  IncompleteMatrix impute(const IncompleteMatrix& data, const Params& mean, Rng& rng) const {
    Matrix overlay = data.imputed();
    for (Index i = 0; i < data.rows(); ++i)
      for (Index j : data.missing_in_row(i)) overlay(i, j) = draw_normal(rng, mean(j), 1.0);
    return data.with_imputed(std::move(overlay));
  }
  Vector flatten(const Params& p) const { return p; }
};

IncompleteMatrix sample_data(bool with_missing) {
  Matrix v(6, 2);
  v << 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12;
  if (with_missing) {
    v(1, 0) = NA;
    v(4, 1) = NA;
  }
  return make_incomplete(v);
}

bool bitwise_equal(const ChainTrace& a, const ChainTrace& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const auto& x = a.snapshots()[k];
    const auto& y = b.snapshots()[k];
    if (x.label != y.label || x.payload.size() != y.payload.size()) return false;
    if (std::memcmp(x.payload.data(), y.payload.data(), sizeof(double) * x.payload.size()) != 0)
      return false;
  }
  return true;
}

// Two scalar blocks that read each other: a <- b + 1, b <- 2a.
struct TwoBlockModel {
  using Latent = IncompleteMatrix;
  using Params = Vector;
  int order_a = 1;
  int order_b = 2;

  std::vector<BlockSpec> blocks() const { return {{"a", 1, order_a}, {"b", 1, order_b}}; }
  Params initial_params(const IncompleteMatrix&) const { return Vector::Zero(2); }
  Latent impute(const Latent& data, const Params&, Rng&) const { return data; }
  void update_block(std::size_t k, const Latent&, Params& p, Rng&) const {
    if (k == 0)
      p(0) = p(1) + 1.0;
    else
      p(1) = 2.0 * p(0);
  }
  Vector flatten(const Params& p) const { return p; }
};

struct FailingBlockModel : TwoBlockModel {
  void update_block(std::size_t k, const Latent& d, Params& p, Rng& r) const {
    if (k == 1 && p(0) > 2.0) throw std::runtime_error("block b broke");
    TwoBlockModel::update_block(k, d, p, r);
  }
};

}  // namespace

TEST(EngineConfig, Validation) {
  EngineConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.burn_in = cfg.iterations;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = {};
  cfg.chains = 0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = {};
  cfg.iterations = 0;
  cfg.burn_in = 0;
  EXPECT_THROW(cfg.validate(), Error);
}

TEST(RunIc, NoMissingCellsGivesConstantTrace) {
  const MeanModel model;
  EngineConfig cfg;
  const ChainTrace t = run_ic(model, sample_data(false), cfg);
  ASSERT_EQ(t.size(), cfg.iterations);
  for (const auto& s : t.snapshots()) EXPECT_EQ(s.payload, t.snapshots().front().payload);
}

TEST(RunIc, SingleIterationIsMedianFillEstimate) {
  const MeanModel model;
  EngineConfig cfg;
  cfg.iterations = 1;
  cfg.burn_in = 0;
  const IncompleteMatrix data = sample_data(true);
  const ChainTrace t = run_ic(model, data, cfg);
  ASSERT_EQ(t.size(), 1u);
  EXPECT_EQ(t.back().label, 1u);
  EXPECT_EQ(t.back().payload, model.estimate(median_fill(data)));
}

TEST(RunIc, LabelsRunFromOne) {
  const MeanModel model;
  const ChainTrace t = run_ic(model, sample_data(true), EngineConfig{});
  for (std::size_t k = 0; k < t.size(); ++k) EXPECT_EQ(t.snapshots()[k].label, k + 1);
}

TEST(RunIc, DeterministicForSeed) {
  const MeanModel model;
  EngineConfig cfg;
  cfg.seed = 11;
  const IncompleteMatrix data = sample_data(true);
  EXPECT_TRUE(bitwise_equal(run_ic(model, data, cfg), run_ic(model, data, cfg)));
  EngineConfig other = cfg;
  other.seed = 12;
  EXPECT_FALSE(bitwise_equal(run_ic(model, data, cfg), run_ic(model, data, other)));
}

TEST(RunIc, RestartFromCheckpointReproducesSuffix) {
  const MeanModel model;
  EngineConfig cfg;
  cfg.seed = 5;
  const IncompleteMatrix data = sample_data(true);
  const auto whole = run_ic_chain(model, data, cfg);
  for (std::size_t cut : {1u, 7u, 29u}) {
    EngineConfig head = cfg;
    head.iterations = cut;
    head.burn_in = 0;
    const auto first = run_ic_chain(model, data, head);
    const auto rest = resume_ic(model, first.last, cfg, chain_seed(cfg, 0));
    ChainTrace joined(cfg.burn_in);
    for (const auto& s : first.trace.snapshots()) joined.append(s);
    for (const auto& s : rest.trace.snapshots()) joined.append(s);
    EXPECT_TRUE(bitwise_equal(joined, whole.trace)) << "cut at " << cut;
  }
}

TEST(RunIc, EstimatorFailureCarriesIteration) {
  MeanModel model;
  model.fail_at_call = 4;
  try {
    run_ic(model, sample_data(true), EngineConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::estimator_failure);
    EXPECT_EQ(e.index(), 4u);
  }
}

TEST(RunIc, CompleteCaseStartImputesFirst) {
  const MeanModel model;
  EngineConfig cfg;
  cfg.start = StartMode::c_step_first;
  cfg.iterations = 3;
  cfg.burn_in = 0;
  const IncompleteMatrix data = sample_data(true);
  const auto start = start_ic(model, data, cfg);
  EXPECT_TRUE(start.impute_next);
  EXPECT_EQ(start.params, model.estimate_complete_cases(data));
  EXPECT_EQ(run_ic(model, data, cfg).size(), 3u);
}

TEST(RunIc, ChainsMatchIndividualRuns) {
  const MeanModel model;
  EngineConfig cfg;
  cfg.chains = 3;
  cfg.seed = 99;
  const IncompleteMatrix data = sample_data(true);
  const auto chains = run_ic_chains(model, data, cfg);
  ASSERT_EQ(chains.size(), 3u);
  for (std::size_t c = 0; c < 3; ++c)
    EXPECT_TRUE(bitwise_equal(chains[c], run_ic_chain(model, data, cfg, c).trace));
  EXPECT_FALSE(bitwise_equal(chains[0], chains[1]));
}

TEST(RunIcc, SingleBlockEqualsIc) {
  const MeanModel model;
  EngineConfig cfg;
  cfg.seed = 3;
  const IncompleteMatrix data = sample_data(true);
  EXPECT_TRUE(bitwise_equal(run_icc(SingleBlock<MeanModel>(model), data, cfg), run_ic(model, data, cfg)));
}

TEST(RunIcc, BlocksUseFreshestValues) {
  EngineConfig cfg;
  cfg.iterations = 2;
  cfg.burn_in = 0;
  const ChainTrace t = run_icc(TwoBlockModel{}, sample_data(false), cfg);
  // (0,0) -> a=1, b=2 -> a=3, b=6
  EXPECT_EQ(t.snapshots()[0].payload, (Vector(2) << 1, 2).finished());
  EXPECT_EQ(t.snapshots()[1].payload, (Vector(2) << 3, 6).finished());

  TwoBlockModel reversed;
  reversed.order_a = 2;
  reversed.order_b = 1;
  const ChainTrace r = run_icc(reversed, sample_data(false), cfg);
  // (0,0) -> b=0, a=1 -> b=2, a=3
  EXPECT_EQ(r.snapshots()[1].payload, (Vector(2) << 3, 2).finished());
}

TEST(RunIcc, BlockFailureNamesBlockAndIteration) {
  EngineConfig cfg;
  cfg.iterations = 5;
  cfg.burn_in = 0;
  try {
    run_icc(FailingBlockModel{}, sample_data(false), cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::block_failure);
    EXPECT_EQ(e.index(), 2u);
    EXPECT_NE(std::string(e.what()).find("'b'"), std::string::npos);
  }
}

TEST(BlockSchedule, RequiresPermutation) {
  EXPECT_EQ(block_schedule({{"x", 1, 2}, {"y", 1, 1}}), (std::vector<std::size_t>{1, 0}));
  EXPECT_THROW(block_schedule({{"x", 1, 1}, {"y", 1, 1}}), Error);
  EXPECT_THROW(block_schedule({{"x", 1, 0}}), Error);
  EXPECT_THROW(block_schedule({{"x", 1, 3}, {"y", 1, 1}}), Error);
  EXPECT_THROW(block_schedule({}), Error);
}

namespace {

ChainTrace series_trace(const std::vector<double>& v) {
  ChainTrace t(0);
  for (std::size_t k = 0; k < v.size(); ++k) t.append({k + 1, Vector::Constant(1, v[k])});
  return t;
}

}  // namespace

TEST(GelmanRubin, IdenticalConstantChainsGiveOne) {
  const auto t = series_trace({2, 2, 2, 2});
  EXPECT_EQ(gelman_rubin({t, t, t}, 0), 1.0);
}

TEST(GelmanRubin, SeparatedConstantsExceedThreshold) {
  EXPECT_GT(gelman_rubin({series_trace({1, 1, 1}), series_trace({2, 2, 2})}, 0), 1.1);
  EXPECT_GT(gelman_rubin({series_trace({1, 1.1, 0.9}), series_trace({5, 5.1, 4.9})}, 0), 1.1);
}

TEST(GelmanRubin, MatchesDirectFormula) {
  const std::vector<std::vector<double>> chains = {{1, 2, 4, 3}, {2, 2.5, 1, 0}, {3, 5, 4, 4.5}};
  std::vector<ChainTrace> traces;
  for (const auto& c : chains) traces.push_back(series_trace(c));
  double w = 0.0, grand = 0.0;
  std::vector<double> means;
  for (const auto& c : chains) {
    double m = 0.0;
    for (double v : c) m += v;
    m /= 4.0;
    double s = 0.0;
    for (double v : c) s += (v - m) * (v - m);
    w += s / 3.0;
    means.push_back(m);
    grand += m;
  }
  w /= 3.0;
  grand /= 3.0;
  double b = 0.0;
  for (double m : means) b += (m - grand) * (m - grand);
  b = 4.0 * b / 2.0;
  const double expected = std::sqrt((0.75 * w + b / 4.0) / w);
  EXPECT_NEAR(gelman_rubin(traces, 0), expected, 1e-14);
}

TEST(GelmanRubin, SameDistributionApproachesOne) {
  std::vector<double> prev_gap;
  for (std::size_t len : {100u, 10000u}) {
    std::vector<ChainTrace> traces;
    for (std::uint64_t c = 0; c < 4; ++c) {
      Rng rng = make_rng(17, {c});
      std::vector<double> v(len);
      for (auto& x : v) x = draw_normal(rng);
      traces.push_back(series_trace(v));
    }
    prev_gap.push_back(std::abs(gelman_rubin(traces, 0) - 1.0));
  }
  EXPECT_LT(prev_gap[1], 0.01);
  EXPECT_LT(prev_gap[1], prev_gap[0] + 1e-12);
}

TEST(GelmanRubin, NeedsTwoChains) {
  try {
    gelman_rubin({series_trace({1, 2})}, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::insufficient_chains);
  }
  EXPECT_THROW(gelman_rubin({series_trace({1, 2}), series_trace({1, 2, 3})}, 0), Error);
}

TEST(Rng, DerivedSeedsDiffer) {
  EXPECT_NE(derive_seed(1, {0}), derive_seed(1, {1}));
  EXPECT_NE(derive_seed(1, {0, 1}), derive_seed(1, {1, 0}));
  EXPECT_EQ(derive_seed(7, {3, 4}), derive_seed(7, {3, 4}));
}
