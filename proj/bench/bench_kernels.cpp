// Serial reference vs OpenMP kernels, plus alternating-minimization cost as
// the number of observed cells grows. Run with OMP_NUM_THREADS to vary the
// parallel width.

#include "tvirt/data_io.hpp"
#include "tvirt/estimators.hpp"
#include "tvirt/evaluation.hpp"
#include "tvirt/integrability.hpp"
#include "tvirt/sampling.hpp"

#include <benchmark/benchmark.h>

#include <cmath>
#include <vector>

using namespace tvirt;

namespace {

const SyntheticData& data() {
  static const SyntheticData d = [] {
    SyntheticSpec s;
    s.seed = 1;
    return generate_synthetic(s);
  }();
  return d;
}

Exec exec_of(const benchmark::State& state) { return state.range(0) ? Exec::parallel : Exec::serial; }

void abs_curls(benchmark::State& state) {
  const auto rects = sample_rectangles(data().matrix.mask(), 200000, 3);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::abs_curls(data().matrix.values(), rects, exec_of(state)));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(rects.size()));
}
BENCHMARK(abs_curls)->Arg(0)->Arg(1)->ArgName("parallel")->Unit(benchmark::kMillisecond);

void curl_bootstrap_kernel(benchmark::State& state) {
  const std::vector<Link> links{Link(LinkKind::identity), Link(LinkKind::probit), Link(LinkKind::logit)};
  CurlBootstrapOptions opts;
  opts.n_boot = 50;
  opts.exec = exec_of(state);
  for (auto _ : state) benchmark::DoNotOptimize(curl_bootstrap(data().matrix, links, opts));
}
BENCHMARK(curl_bootstrap_kernel)->Arg(0)->Arg(1)->ArgName("parallel")->Unit(benchmark::kMillisecond);

void bootstrap_eval_kernel(benchmark::State& state) {
  const auto split = make_holdout(30, 200, 0.2, 0);
  SamplingSpec spec;
  spec.c = 1.6;
  const auto mask = make_mask(30, 200, spec, split.holdout);
  EvalOptions opts;
  opts.n_boot = 100;
  opts.exec = exec_of(state);
  for (auto _ : state) benchmark::DoNotOptimize(bootstrap_eval(data().matrix, split.holdout, mask.mask, opts));
}
BENCHMARK(bootstrap_eval_kernel)->Arg(0)->Arg(1)->ArgName("parallel")->Unit(benchmark::kMillisecond);

// range(0): items J with K = J / 4 agents at nlogn C = 1.6.
void am_scaling(benchmark::State& state) {
  SyntheticSpec s;
  s.j = static_cast<std::size_t>(state.range(0));
  s.k = s.j / 4;
  const auto d = generate_synthetic(s);
  SamplingSpec spec;
  spec.c = 1.6;
  const auto mask = make_mask(s.k, s.j, spec, ObservationMask(s.k, s.j));
  const auto obs = observations(d.matrix, mask.mask);
  std::size_t iters = 0;
  for (auto _ : state) {
    const auto fit = fit_clipped_linear(obs);
    iters = fit.iterations;
    benchmark::DoNotOptimize(fit);
  }
  state.counters["cells"] = static_cast<double>(obs.cells.size());
  state.counters["iterations"] = static_cast<double>(iters);
  state.SetComplexityN(static_cast<std::int64_t>(obs.cells.size()));
}
BENCHMARK(am_scaling)->RangeMultiplier(2)->Range(200, 3200)->Complexity(benchmark::oN)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
