#include <benchmark/benchmark.h>

#include "icfit/ggm.hpp"
#include "icfit/randcoef.hpp"
#include "icfit/reference.hpp"
#include "icfit/simgen.hpp"

using namespace icfit;

namespace {

Matrix ggm_data(Index n, Index p) {
  Rng rng = make_rng(1, {});
  return simgen::sample_ggm_data(simgen::ar2_concentration(p), n, rng);
}

void BM_CorrelationParallel(benchmark::State& state) {
  const Matrix x = ggm_data(200, state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(ggm::correlation_matrix(x, Execution::parallel));
}

void BM_CorrelationSerial(benchmark::State& state) {
  const Matrix x = ggm_data(200, state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(ggm::correlation_matrix(x, Execution::serial));
}

void BM_CorrelationReference(benchmark::State& state) {
  const Matrix x = ggm_data(200, state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(reference::correlation_matrix(x));
}

void BM_PsiParallel(benchmark::State& state) {
  const Matrix x = ggm_data(200, state.range(0));
  const Index cap = ggm::default_cap(200);
  const auto hoods = ggm::screen_neighborhoods(x, cap);
  for (auto _ : state) benchmark::DoNotOptimize(ggm::psi_scores(x, hoods, cap, Execution::parallel));
}

void BM_PsiSerial(benchmark::State& state) {
  const Matrix x = ggm_data(200, state.range(0));
  const Index cap = ggm::default_cap(200);
  const auto hoods = ggm::screen_neighborhoods(x, cap);
  for (auto _ : state) benchmark::DoNotOptimize(ggm::psi_scores(x, hoods, cap, Execution::serial));
}

void BM_PsiReference(benchmark::State& state) {
  const Matrix x = ggm_data(200, state.range(0));
  const Index cap = ggm::default_cap(200);
  const auto hoods = ggm::screen_neighborhoods(x, cap);
  for (auto _ : state) benchmark::DoNotOptimize(reference::psi_scores(x, hoods, cap));
}

void impute_case(benchmark::State& state, Execution exec) {
  Rng rng = make_rng(2, {});
  const Matrix x = ggm_data(200, state.range(0));
  const IncompleteMatrix data = median_fill(simgen::inject_mcar(x, 0.1, rng));
  const auto graph = ggm::learn_graph(data.imputed());
  for (auto _ : state) benchmark::DoNotOptimize(ggm::impute_ggm(data, graph, rng, exec));
}

void BM_ImputeParallel(benchmark::State& state) { impute_case(state, Execution::parallel); }
void BM_ImputeSerial(benchmark::State& state) { impute_case(state, Execution::serial); }

void BM_RandCoefIccSweep(benchmark::State& state) {
  simgen::RandCoefDims dims;
  Rng rng = make_rng(3, {});
  const auto s = simgen::sample_randcoef_data(dims, simgen::default_randcoef_truth(dims), rng);
  const auto h = randcoef::Hyperparameters::defaults(3, 2, 2);
  auto st = randcoef::initial_state(s.data, h, rng);
  for (auto _ : state) st = randcoef::icc_step(st, h, s.data, rng);
}

}  // namespace

BENCHMARK(BM_CorrelationParallel)->Arg(100)->Arg(400);
BENCHMARK(BM_CorrelationSerial)->Arg(100)->Arg(400);
BENCHMARK(BM_CorrelationReference)->Arg(100)->Arg(400);
BENCHMARK(BM_PsiParallel)->Arg(100)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PsiSerial)->Arg(100)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PsiReference)->Arg(100)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ImputeParallel)->Arg(100)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ImputeSerial)->Arg(100)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RandCoefIccSweep)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
