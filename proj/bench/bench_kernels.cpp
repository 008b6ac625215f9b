// Serial reference vs OpenMP kernel timings on the reference model.
#include "dfl/dual.hpp"
#include "dfl/filter.hpp"
#include "dfl/pathsim.hpp"

#include <benchmark/benchmark.h>

using namespace dfl;

namespace {

constexpr int kSteps = 200;

const Model& model() {
  static const Model m = reference_model();
  return m;
}

void BM_Ensemble(benchmark::State& st, bool parallel) {
  const TimeGrid g(model().T(), kSteps);
  const int N = static_cast<int>(st.range(0));
  for (auto _ : st) {
    Ensemble e = parallel ? simulate_ensemble(model(), g, N, 1, Measure::Ptilde)
                          : simulate_ensemble_serial(model(), g, N, 1, Measure::Ptilde);
    benchmark::DoNotOptimize(e.log_d(0, kSteps));
  }
  st.SetItemsProcessed(st.iterations() * N * kSteps);
}

void BM_Filter(benchmark::State& st, bool parallel) {
  const TimeGrid g(model().T(), kSteps);
  const int N = static_cast<int>(st.range(0));
  const Ensemble e = simulate_ensemble(model(), g, N, 1, Measure::Ptilde);
  for (auto _ : st) {
    FilterEnsemble fe = parallel ? run_filter_ensemble(model(), e) : run_filter_ensemble_serial(model(), e);
    benchmark::DoNotOptimize(fe.pi(kSteps, 0)[0]);
  }
  st.SetItemsProcessed(st.iterations() * N * kSteps);
}

void BM_Evaluate(benchmark::State& st, bool parallel) {
  const TimeGrid g(model().T(), kSteps);
  const int N = static_cast<int>(st.range(0));
  const Ensemble e = simulate_ensemble(model(), g, N, 1, Measure::Ptilde);
  const FilterEnsemble fe = run_filter_ensemble(model(), e);
  const Vec F = (Vec(3) << 0, 1, 2).finished();
  const OdeSolution sol = solve_backward_ode(model(), F, Control::constant(g, 0.5), g);
  EvalOptions o;
  o.parallel = parallel;
  for (auto _ : st) {
    ControlEvaluation ev = evaluate_control(sol, e, fe, o);
    benchmark::DoNotOptimize(ev.J.data());
  }
  st.SetItemsProcessed(st.iterations() * N * kSteps);
}

}  // namespace

BENCHMARK_CAPTURE(BM_Ensemble, serial, false)->Arg(10000)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_Ensemble, parallel, true)->Arg(10000)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_Filter, serial, false)->Arg(10000)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_Filter, parallel, true)->Arg(10000)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_Evaluate, serial, false)->Arg(10000)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_Evaluate, parallel, true)->Arg(10000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
