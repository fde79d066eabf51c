#pragma once

#include <algorithm>
#include <concepts>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "icfit/core.hpp"
#include "icfit/parallel.hpp"
#include "icfit/rng.hpp"

namespace icfit {

struct BlockSpec {
  std::string name;
  Index dimension = 1;
  int update_order = 1;  // 1-based rank within one CC sweep
};

enum class StartMode {
  median_fill,   // fill missing cells by column medians, then C-step
  c_step_first,  // estimate from complete cases, then I-step
};

struct EngineConfig {
  std::size_t iterations = 30;
  std::size_t burn_in = 20;
  std::size_t chains = 1;
  std::uint64_t seed = 0;
  StartMode start = StartMode::median_fill;

  void validate() const;
};

// State of one chain between iterations. The I-step conditions on the
// previous fill as well as on the parameters, so both are kept.
template <class Latent, class Params>
struct Checkpoint {
  std::size_t iteration = 0;
  Latent latent;
  Params params;
  bool impute_next = false;
};

template <class Latent, class Params>
struct ChainRun {
  ChainTrace trace;
  Checkpoint<Latent, Params> last;
};

// Estimator + imputer pair for the plain IC algorithm.
template <class M>
concept IcModel = requires(const M& m, const IncompleteMatrix& data,
                           const typename M::Params& params, Rng& rng) {
  { m.estimate(data) } -> std::convertible_to<typename M::Params>;
  { m.impute(data, params, rng) } -> std::convertible_to<IncompleteMatrix>;
  { m.flatten(params) } -> std::convertible_to<Vector>;
};

template <class M>
concept CompleteCaseStart = requires(const M& m, const IncompleteMatrix& data) {
  { m.estimate_complete_cases(data) } -> std::convertible_to<typename M::Params>;
};

// Blockwise model for the ICC algorithm. update_block(k, ...) overwrites block
// k of params, reading the freshest values of every other block.
template <class M>
concept IccModel = requires(const M& m, const typename M::Latent& latent,
                            typename M::Params& params, const typename M::Params& cparams,
                            Rng& rng, std::size_t k) {
  { m.blocks() } -> std::convertible_to<std::vector<BlockSpec>>;
  { m.impute(latent, cparams, rng) } -> std::convertible_to<typename M::Latent>;
  m.update_block(k, latent, params, rng);
  { m.flatten(cparams) } -> std::convertible_to<Vector>;
};

template <class M>
concept IccMatrixModel = IccModel<M> && std::same_as<typename M::Latent, IncompleteMatrix> &&
                         requires(const M& m, const IncompleteMatrix& data) {
                           { m.initial_params(data) } -> std::convertible_to<typename M::Params>;
                         };

inline std::uint64_t chain_seed(const EngineConfig& cfg, std::size_t chain) {
  return derive_seed(cfg.seed, {static_cast<std::uint64_t>(chain)});
}

// Indices into blocks() sorted by update_order; throws unless the orders are
// a permutation of 1..k.
std::vector<std::size_t> block_schedule(const std::vector<BlockSpec>& blocks);

// Potential scale reduction factor of one coordinate over the post-burn-in
// windows of several chains.
double gelman_rubin(const std::vector<ChainTrace>& traces, Index coordinate);

namespace detail {

[[noreturn]] void rethrow_as_estimator_failure(std::size_t iteration);
[[noreturn]] void rethrow_as_block_failure(const std::string& block, std::size_t iteration);

template <class M>
std::vector<ChainTrace> run_chains(const EngineConfig& cfg, M&& run_one) {
  std::vector<ChainTrace> traces(cfg.chains);
  for_each_index(static_cast<Index>(cfg.chains), Execution::parallel, [&](Index c) {
    traces[static_cast<std::size_t>(c)] = run_one(static_cast<std::size_t>(c));
  });
  return traces;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// IC

template <IcModel M>
Checkpoint<IncompleteMatrix, typename M::Params> start_ic(const M& model,
                                                          const IncompleteMatrix& data,
                                                          const EngineConfig& cfg) {
  IncompleteMatrix filled = median_fill(data);
  if (cfg.start == StartMode::c_step_first) {
    if constexpr (CompleteCaseStart<M>) {
      try {
        auto params = model.estimate_complete_cases(data);
        return {0, std::move(filled), std::move(params), true};
      } catch (...) {
        detail::rethrow_as_estimator_failure(0);
      }
    } else {
      throw Error(Errc::invalid_argument, "model does not support a C-step-first start");
    }
  }
  // Params are produced by the first C-step; estimate once so the checkpoint
  // is fully formed.
  try {
    auto params = model.estimate(filled);
    return {0, std::move(filled), std::move(params), false};
  } catch (...) {
    detail::rethrow_as_estimator_failure(1);
  }
}

template <IcModel M>
ChainRun<IncompleteMatrix, typename M::Params> resume_ic(
    const M& model, Checkpoint<IncompleteMatrix, typename M::Params> state,
    const EngineConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ChainTrace trace(cfg.burn_in);
  for (std::size_t t = state.iteration + 1; t <= cfg.iterations; ++t) {
    Rng rng = make_rng(seed, {static_cast<std::uint64_t>(t)});
    if (state.impute_next) state.latent = model.impute(state.latent, state.params, rng);
    try {
      state.params = model.estimate(state.latent);
    } catch (...) {
      detail::rethrow_as_estimator_failure(t);
    }
    state.iteration = t;
    state.impute_next = true;
    trace.append({t, model.flatten(state.params)});
  }
  return {std::move(trace), std::move(state)};
}

template <IcModel M>
ChainRun<IncompleteMatrix, typename M::Params> run_ic_chain(const M& model,
                                                            const IncompleteMatrix& data,
                                                            const EngineConfig& cfg,
                                                            std::size_t chain = 0) {
  cfg.validate();
  auto state = start_ic(model, data, cfg);
  if (cfg.start == StartMode::median_fill) {
    // The estimate computed by start_ic is iteration 1.
    ChainTrace trace(cfg.burn_in);
    trace.append({1, model.flatten(state.params)});
    state.iteration = 1;
    state.impute_next = true;
    auto rest = resume_ic(model, std::move(state), cfg, chain_seed(cfg, chain));
    for (const auto& s : rest.trace.snapshots()) trace.append(s);
    return {std::move(trace), std::move(rest.last)};
  }
  return resume_ic(model, std::move(state), cfg, chain_seed(cfg, chain));
}

template <IcModel M>
ChainTrace run_ic(const M& model, const IncompleteMatrix& data, const EngineConfig& cfg) {
  return run_ic_chain(model, data, cfg, 0).trace;
}

template <IcModel M>
std::vector<ChainTrace> run_ic_chains(const M& model, const IncompleteMatrix& data,
                                      const EngineConfig& cfg) {
  return detail::run_chains(cfg, [&](std::size_t c) {
    return run_ic_chain(model, data, cfg, c).trace;
  });
}

// ---------------------------------------------------------------------------
// ICC

template <IccModel M>
ChainRun<typename M::Latent, typename M::Params> resume_icc(
    const M& model, Checkpoint<typename M::Latent, typename M::Params> state,
    const EngineConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const std::vector<BlockSpec> blocks = model.blocks();
  const std::vector<std::size_t> order = block_schedule(blocks);
  ChainTrace trace(cfg.burn_in);
  for (std::size_t t = state.iteration + 1; t <= cfg.iterations; ++t) {
    Rng rng = make_rng(seed, {static_cast<std::uint64_t>(t)});
    if (state.impute_next)
      state.latent = model.impute(state.latent, std::as_const(state.params), rng);
    for (std::size_t k : order) {
      try {
        model.update_block(k, state.latent, state.params, rng);
      } catch (...) {
        detail::rethrow_as_block_failure(blocks[k].name, t);
      }
    }
    state.iteration = t;
    state.impute_next = true;
    trace.append({t, model.flatten(std::as_const(state.params))});
  }
  return {std::move(trace), std::move(state)};
}

template <IccMatrixModel M>
Checkpoint<IncompleteMatrix, typename M::Params> start_icc(const M& model,
                                                           const IncompleteMatrix& data,
                                                           const EngineConfig& cfg) {
  if (cfg.start == StartMode::c_step_first) {
    if constexpr (CompleteCaseStart<M>) {
      try {
        auto params = model.estimate_complete_cases(data);
        return {0, median_fill(data), std::move(params), true};
      } catch (...) {
        detail::rethrow_as_estimator_failure(0);
      }
    } else {
      throw Error(Errc::invalid_argument, "model does not support a C-step-first start");
    }
  }
  IncompleteMatrix filled = median_fill(data);
  auto params = model.initial_params(filled);
  return {0, std::move(filled), std::move(params), false};
}

template <IccMatrixModel M>
ChainRun<IncompleteMatrix, typename M::Params> run_icc_chain(const M& model,
                                                             const IncompleteMatrix& data,
                                                             const EngineConfig& cfg,
                                                             std::size_t chain = 0) {
  cfg.validate();
  return resume_icc(model, start_icc(model, data, cfg), cfg, chain_seed(cfg, chain));
}

template <IccMatrixModel M>
ChainTrace run_icc(const M& model, const IncompleteMatrix& data, const EngineConfig& cfg) {
  return run_icc_chain(model, data, cfg, 0).trace;
}

template <IccMatrixModel M>
std::vector<ChainTrace> run_icc_chains(const M& model, const IncompleteMatrix& data,
                                       const EngineConfig& cfg) {
  return detail::run_chains(cfg, [&](std::size_t c) {
    return run_icc_chain(model, data, cfg, c).trace;
  });
}

// Views an IC model as a one-block ICC model.
template <IcModel M>
class SingleBlock {
 public:
  using Latent = IncompleteMatrix;
  using Params = typename M::Params;

  explicit SingleBlock(const M& inner, std::string name = "theta")
      : inner_(&inner), name_(std::move(name)) {}

  std::vector<BlockSpec> blocks() const { return {{name_, 1, 1}}; }
  Params initial_params(const IncompleteMatrix& filled) const { return inner_->estimate(filled); }
  Latent impute(const Latent& data, const Params& params, Rng& rng) const {
    return inner_->impute(data, params, rng);
  }
  void update_block(std::size_t, const Latent& data, Params& params, Rng&) const {
    params = inner_->estimate(data);
  }
  Vector flatten(const Params& params) const { return inner_->flatten(params); }

 private:
  const M* inner_;
  std::string name_;
};

}  // namespace icfit
