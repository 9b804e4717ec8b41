#include <benchmark/benchmark.h>

#include "hamopt/environments.hpp"
#include "hamopt/parallel.hpp"
#include "hamopt/training.hpp"

using namespace hamopt;

namespace {

void phase1_batch(benchmark::State& state, const char* env_name, ExecutionPolicy policy) {
  const auto env = make_environment(env_name);
  TrainConfig cfg;
  cfg.steps = 20;
  cfg.policy = policy;
  const Phase1Nets nets = init_phase1(*env, 1);
  const auto batch = sample_batch(*env, 1, 1, static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(phase1_loss_and_gradient(nets, *env, batch, cfg));
  state.SetItemsProcessed(state.iterations() * state.range(0));
  state.counters["threads"] = static_cast<double>(thread_count());
}

void BM_Phase1Serial(benchmark::State& state) { phase1_batch(state, "cartpole", ExecutionPolicy::Serial); }
void BM_Phase1Parallel(benchmark::State& state) { phase1_batch(state, "cartpole", ExecutionPolicy::Parallel); }
void BM_ShapeSerial(benchmark::State& state) { phase1_batch(state, "shape", ExecutionPolicy::Serial); }
void BM_ShapeParallel(benchmark::State& state) { phase1_batch(state, "shape", ExecutionPolicy::Parallel); }

}  // namespace

BENCHMARK(BM_Phase1Serial)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Phase1Parallel)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ShapeSerial)->Arg(8)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ShapeParallel)->Arg(8)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
