#include <benchmark/benchmark.h>

#include <cmath>

#include "nlreg/covering.hpp"
#include "nlreg/kernel.hpp"
#include "nlreg/nonlocal_op.hpp"
#include "nlreg/solver.hpp"

using namespace nlreg;

namespace {

Field bump(int d) {
    Field f;
    f.d = d;
    f.value = [](const Vec& x) {
        const double r2 = dot(x, x);
        return r2 < 1 ? std::pow(1 - r2, 4) * (1 + 0.3 * x[0]) : 0.0;
    };
    f.far_value = 0.0;
    f.far_radius = 1;
    f.sup_bound = 1.3;
    return f;
}

EvalOptions loose() {
    EvalOptions o;
    o.tol = 0;
    return o;
}

void BM_EvalLinear(benchmark::State& state) {
    const int d = int(state.range(0));
    const AnnulusGrid quad(d, 1.0 / 256, 4, 32, 32);
    const KernelSpec K = make_frac_laplacian(d, 1.5);
    const Field u = bump(d);
    for (auto _ : state) benchmark::DoNotOptimize(eval_linear(K, u, {0.2, 0}, quad, 1.5, loose()).value);
}
BENCHMARK(BM_EvalLinear)->Arg(1)->Arg(2)->Unit(benchmark::kMicrosecond);

void BM_EvalExtremal(benchmark::State& state) {
    const int d = int(state.range(0));
    const auto mode = state.range(1) ? ExtremalMode::general : ExtremalMode::symmetric;
    ClassParams p;
    const AnnulusGrid quad(d, 1.0 / 64, 4, 16, 16);
    const Field u = bump(d);
    for (auto _ : state) benchmark::DoNotOptimize(eval_extremal(p, u, {0.2, 0}, Sign::minus, mode, quad, loose()).value);
}
BENCHMARK(BM_EvalExtremal)->Args({1, 0})->Args({1, 1})->Args({2, 0})->Args({2, 1})->Unit(benchmark::kMillisecond);

void BM_Step(benchmark::State& state) {
    const int d = int(state.range(0));
    const auto op = state.range(1) ? OperatorKind::extremal_minus : OperatorKind::linear;
    ParabolicProblem P;
    P.params.alpha = 1.5;
    P.op = op;
    P.kernel = make_frac_laplacian(d, 1.5);
    P.initial = GridFunction::sample(d, 1.5, d == 1 ? 1.0 / 64 : 1.0 / 16,
                                     [](const Vec& x) { return std::exp(-4 * dot(x, x)); });
    P.initial.set_far_constant(0);
    const Stepper st(P);
    const double dt = st.cfl_dt();
    for (auto _ : state) benchmark::DoNotOptimize(st.step(P.initial, 0, dt));
}
BENCHMARK(BM_Step)->Args({1, 0})->Args({1, 1})->Args({2, 0})->Args({2, 1})->Unit(benchmark::kMillisecond);

void BM_CheckAssumptions(benchmark::State& state) {
    ClassParams p;
    const int d = int(state.range(0));
    const AnnulusGrid grid(d, std::ldexp(1.0, -12), 64, 64, 32);
    const KernelSpec K = make_frac_laplacian(d, p.alpha);
    for (auto _ : state) benchmark::DoNotOptimize(check_assumptions(K, p, grid).all_pass());
}
BENCHMARK(BM_CheckAssumptions)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);

void BM_InkSpots(benchmark::State& state) {
    const int d = int(state.range(0));
    const InkSpotsInstance inst = make_ink_spots_instance(d, 1.0, 0.5, 2.0, d == 1 ? 128 : 32, 48);
    for (auto _ : state)
        benchmark::DoNotOptimize(ink_spots_check(inst.E, inst.F, inst.mu, inst.m, inst.probes).pass());
}
BENCHMARK(BM_InkSpots)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
