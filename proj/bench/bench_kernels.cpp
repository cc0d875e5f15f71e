// Serial vs OpenMP timings of the parallel kernels. Arg 0 = serial, 1 = parallel.
#include <benchmark/benchmark.h>

#include <filesystem>

#include "dissipasynth/analysis.hpp"
#include "dissipasynth/experiment.hpp"

namespace ds = dissipasynth;

namespace {

ds::Exec exec_of(const benchmark::State& state) {
  return state.range(0) == 0 ? ds::Exec::serial : ds::Exec::parallel;
}

struct Fixture {
  ds::SynthesisIngredients ing;
  ds::SynthesisResult res;
};

const Fixture& fixture() {
  static const Fixture f = [] {
    const auto cfg = ds::load_config(std::filesystem::path(DS_CONFIG_DIR) / "plant2_full.json");
    auto ing = ds::ingredients(cfg, ds::generate_record(cfg));
    auto res = ds::min_gamma(ing, cfg.alpha, cfg.options);
    ing.supply = ds::hinf_supply(*res.gamma, 1, 1);
    return Fixture{std::move(ing), std::move(res)};
  }();
  return f;
}

void BM_FrequencyResponse(benchmark::State& state) {
  const auto& f = fixture();
  const auto cl = ds::close_loop(f.ing.plant(f.ing.cs.As, f.ing.cs.Bs), f.res.controller);
  for (auto _ : state) benchmark::DoNotOptimize(ds::frequency_response(cl, 16384, exec_of(state)));
}

void BM_AlphaGrid(benchmark::State& state) {
  const auto& f = fixture();
  const auto grid = ds::AlphaStrategy::grid(1e-2, 1e2, 16);
  for (auto _ : state)
    benchmark::DoNotOptimize(ds::search_alpha(f.ing, grid, ds::Objective::feasibility, {}, exec_of(state)));
}

void BM_SampleMembers(benchmark::State& state) {
  const auto& f = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(ds::sample_members(f.ing.cs, 2000, 1, exec_of(state)));
}

void BM_WorstCaseCheck(benchmark::State& state) {
  const auto& f = fixture();
  for (auto _ : state)
    benchmark::DoNotOptimize(ds::worst_case_check(f.ing, f.res.controller, 50, 1, exec_of(state), 512));
}

}  // namespace

BENCHMARK(BM_FrequencyResponse)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_AlphaGrid)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SampleMembers)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_WorstCaseCheck)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
