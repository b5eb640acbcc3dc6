#include <benchmark/benchmark.h>

#include <cmath>
#include <random>

#include "flexlab/factory.hpp"
#include "flexlab/manifold.hpp"
#include "flexlab/realization.hpp"
#include "flexlab/retard.hpp"
#include "flexlab/steering.hpp"

using namespace flexlab;

namespace {

LinearCocycle random_cocycle(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ua(0, 2 * M_PI), us(0.1, 1.0);
  std::vector<Mat2> m;
  for (std::size_t i = 0; i < n; ++i)
    m.push_back(Mat2::rotation(ua(rng)) * Mat2::diag(std::exp(-0.05), std::exp(-us(rng))) *
                Mat2::rotation(ua(rng)));
  return LinearCocycle(m);
}

const RetardableRealization& demo() {
  static const RetardableRealization r = [] {
    const TransitionKit kit = demo_transition_kit();
    const double eps = 0.4;
    const FlexWitness w = build_flex_witness_full(kit, plan_schedule(kit, eps), eps);
    RealizeOptions o;
    o.epsilon1 = eps / 4;
    return realize_flexible(w.path, o);
  }();
  return r;
}

void BM_ScaledProduct(benchmark::State& state) {
  const LinearCocycle c = random_cocycle(static_cast<std::size_t>(state.range(0)), 1);
  for (auto _ : state) benchmark::DoNotOptimize(return_product_scaled(c));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_ScaledProduct)->RangeMultiplier(4)->Range(4, 4096)->Complexity(benchmark::oN);

void BM_ReturnSpectrum(benchmark::State& state) {
  const LinearCocycle c = random_cocycle(256, 2);
  for (auto _ : state) benchmark::DoNotOptimize(return_spectrum(c));
}
BENCHMARK(BM_ReturnSpectrum);

void BM_AnnihilationPath(benchmark::State& state) {
  const double eps = 1.0 / static_cast<double>(state.range(0));
  const Mat2 T = Mat2::rotation(2.5) * Mat2::diag(3.0, 0.5);
  for (auto _ : state)
    benchmark::DoNotOptimize(annihilation_path(T, Mat2::scalar(0.9), eps, Side::Right));
}
BENCHMARK(BM_AnnihilationPath)->Arg(10)->Arg(100)->Arg(1000);

void BM_AssembleDemo(benchmark::State& state) {
  const TransitionKit kit = demo_transition_kit();
  const ScheduleL s = plan_schedule(kit, 0.4);
  for (auto _ : state) benchmark::DoNotOptimize(assemble_flex_cocycle(kit, s));
}
BENCHMARK(BM_AssembleDemo);

void BM_RadialFiberApply(benchmark::State& state) {
  const RadialCocycle& rc = *demo().cocycle;
  const ScaledPoint x = ScaledPoint::polar(0.5 * (rc.theta().inner_log_radius() +
                                                  rc.theta().outer_log_radius()),
                                           0.7);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(rc.apply(i, x));
    i = (i + 1) % rc.period();
  }
}
BENCHMARK(BM_RadialFiberApply);

void BM_RetardedReturnMap(benchmark::State& state) {
  const auto ret = retard(demo().cocycle, demo().spec, static_cast<int>(state.range(0)));
  const LogAnnulus h = homothetic_region(*ret);
  const ScaledPoint x = ScaledPoint::polar(0.5 * (h.log_inner + h.log_outer), 1.1);
  for (auto _ : state) benchmark::DoNotOptimize(ret->return_map(x));
}
BENCHMARK(BM_RetardedReturnMap)->Arg(0)->Arg(20);

void BM_AnnulusDiffeoApply(benchmark::State& state) {
  const auto ret = retard(demo().cocycle, demo().spec, 4);
  TorusFactor t{std::make_shared<const VerticalBumpField>(0.03, 0.2, 0.7, 0.1, 0.25), 1.0, 0.9,
                0.0, 0, 0};
  const AnnulusDiffeo L = lift_factor(t, *ret, 1);
  const ScaledPoint x = ScaledPoint::polar(0.5 * (L.log_inner() + L.log_outer()), 0.6);
  for (auto _ : state) benchmark::DoNotOptimize(L.apply(x));
}
BENCHMARK(BM_AnnulusDiffeoApply);

void BM_FragmentTwist(benchmark::State& state) {
  TorusFlow psi;
  psi.stages.push_back(std::make_shared<const VerticalBumpField>(1.0, 0.1, 0.9, 0.0, 0.5));
  const double mu = 1.0 / static_cast<double>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(fragment(psi, mu));
}
BENCHMARK(BM_FragmentTwist)->Arg(10)->Arg(40)->Unit(benchmark::kMillisecond);

void BM_Meridians(benchmark::State& state) {
  const auto ret = retard(demo().cocycle, demo().spec, 1);
  for (auto _ : state) benchmark::DoNotOptimize(meridians(*ret));
}
BENCHMARK(BM_Meridians)->Unit(benchmark::kMillisecond)->Iterations(2);

}  // namespace

BENCHMARK_MAIN();
