#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "nlreg/errors.hpp"
#include "nlreg/nonlocal_op.hpp"
#include "nlreg/solver.hpp"

using namespace nlreg;

namespace {

ParabolicProblem gaussian_problem(int d, double alpha, double hx) {
    ParabolicProblem P;
    P.params.alpha = alpha;
    P.kernel = make_frac_laplacian(d, alpha);
    P.initial = GridFunction::sample(d, 2.0, hx, [](const Vec& x) { return std::exp(-4 * dot(x, x)); });
    P.initial.set_far_constant(0);
    return P;
}

// Largest |(u1 - u0)/dt - L u0| over |x| < 1/2, against the continuum operator.
double consistency_error(double alpha, double hx) {
    ParabolicProblem P = gaussian_problem(1, alpha, hx);
    const Stepper st(P);
    const double dt = st.cfl_dt();
    const GridFunction u1 = st.step(P.initial, 0, dt);
    Field F;
    F.d = 1;
    F.value = [](const Vec& x) { return std::exp(-4 * dot(x, x)); };
    F.far_value = 0.0;
    F.far_radius = 4;
    EvalOptions o;
    o.tol = 0;
    double worst = 0;
    for (std::size_t i = 0; i < P.initial.size(); ++i) {
        const Vec x = P.initial.node(i);
        if (norm(x) > 0.5) continue;
        const double exact = eval_linear(P.kernel, F, x, AnnulusGrid(1, 1e-3, 8), alpha, o).value;
        worst = std::max(worst, std::abs((u1[i] - P.initial[i]) / dt - exact));
    }
    return worst;
}

Trajectory stationary(const std::function<double(const Vec&)>& f, double hx, std::vector<double> times) {
    Trajectory tr;
    tr.times = std::move(times);
    for (std::size_t k = 0; k < tr.times.size(); ++k) tr.frames.push_back(GridFunction::sample(1, 1.0, hx, f));
    return tr;
}

}  // namespace

TEST_CASE("problem validation") {
    ParabolicProblem P = gaussian_problem(1, 0.6, 1.0 / 32);
    CHECK_NOTHROW(P.validate());
    P.drift = [](const Vec&) { return Vec{1, 0}; };
    CHECK_THROWS_AS(P.validate(), ParameterError);
}

TEST_CASE("lattice operator converges to the continuum one") {
    // Truncating the singular integral at the lattice scale costs hx^{2-alpha}.
    for (double alpha : {0.6, 1.0, 1.5}) {
        const double e1 = consistency_error(alpha, 1.0 / 64), e2 = consistency_error(alpha, 1.0 / 128);
        CHECK(e2 < e1);
        CHECK(e2 / e1 == doctest::Approx(std::exp2(alpha - 2)).epsilon(0.25));
    }
}

TEST_CASE("constants, forcing and the CFL guard") {
    for (auto op : {OperatorKind::linear, OperatorKind::extremal_minus, OperatorKind::extremal_plus}) {
        ParabolicProblem P = gaussian_problem(1, 1.5, 1.0 / 32);
        P.op = op;
        P.initial = GridFunction::sample(1, 2.0, 1.0 / 32, [](const Vec&) { return 3.0; });
        P.initial.set_far_constant(3.0);
        P.forcing = [](const Vec&, double) { return 1.0; };
        const Stepper st(P);
        const double dt = st.cfl_dt();
        CHECK(dt == doctest::Approx(0.9 / st.max_weight()));
        const GridFunction v = st.step(P.initial, 0, dt);
        for (std::size_t i = 0; i < v.size(); ++i)
            if (norm(v.node(i)) < 0.9) CHECK(v[i] == doctest::Approx(3.0 + dt).epsilon(1e-14));
        CHECK_THROWS_AS(st.step(P.initial, 0, 1.01 / st.max_weight()), StepError);
    }
}

TEST_CASE("one step preserves order") {
    std::mt19937_64 g(2);
    std::uniform_real_distribution<double> U(-1, 1);
    ParabolicProblem P = gaussian_problem(1, 1.2, 1.0 / 32);
    P.op = OperatorKind::extremal_minus;
    P.drift_C0 = 0.5;
    const Stepper st(P);
    for (int k = 0; k < 20; ++k) {
        GridFunction u = P.initial, v = P.initial;
        for (std::size_t i = 0; i < u.size(); ++i) {
            u[i] = U(g);
            v[i] = u[i] + 0.5 * (U(g) + 1);
        }
        const GridFunction a = st.step(u, 0, st.cfl_dt()), b = st.step(v, 0, st.cfl_dt());
        for (std::size_t i = 0; i < u.size(); ++i) CHECK(a[i] <= b[i] + 1e-13);
    }
}

TEST_CASE("solve records the requested times and the binary round trip is exact") {
    ParabolicProblem P = gaussian_problem(1, 1.5, 1.0 / 32);
    P.t0 = 0;
    P.t1 = 0.05;
    P.record_times = {0.0, 0.01, 0.05};
    const Trajectory tr = solve(P);
    REQUIRE(tr.times.size() == 3);
    CHECK(tr.times[1] == doctest::Approx(0.01));
    CHECK(tr.times[2] == doctest::Approx(0.05));
    CHECK(tr.cfl_ratio <= 1);
    double prev = std::numeric_limits<double>::infinity();
    for (const auto& f : tr.frames) {
        double sup = 0;
        for (double x : f.values()) sup = std::max(sup, std::abs(x));
        CHECK(sup <= prev);
        prev = sup;
    }
    std::stringstream ss;
    tr.write_binary(ss);
    const Trajectory back = Trajectory::read_binary(ss);
    REQUIRE(back.frames.size() == tr.frames.size());
    CHECK(back.times == tr.times);
    CHECK(back.dt == tr.dt);
    for (std::size_t k = 0; k < tr.frames.size(); ++k) CHECK(back.frames[k].values() == tr.frames[k].values());
    std::stringstream bad("not a trajectory");
    CHECK_THROWS(Trajectory::read_binary(bad));
}

TEST_CASE("inf-convolution against direct minimisation") {
    std::mt19937_64 g(8);
    std::uniform_real_distribution<double> U(0, 1);
    GridFunction u(1, 1.5, 1.0 / 16);
    for (auto& v : u.values()) v = U(g);
    const InfConvolution ic = inf_convolution_q(u, 64);
    for (std::size_t i = 0; i < u.size(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < u.size(); ++j) {
            const Vec y = u.node(j);
            if (norm(y) > 1) continue;
            const Vec dxy = u.node(i) - y;
            best = std::min(best, u[j] + 64 * dot(dxy, dxy));
        }
        CHECK(ic.q[i] == doctest::Approx(best).epsilon(1e-14));
        if (norm(u.node(i)) <= 1) CHECK(ic.q[i] <= u[i]);
    }
}

TEST_CASE("time weights are Voronoi cells clipped to the window") {
    const auto w = time_weights({0, 1, 2, 4}, 0.5, 4);
    REQUIRE(w.size() == 4);
    CHECK(w[0] == doctest::Approx(0.0));
    CHECK(w[1] == doctest::Approx(1.0));
    CHECK(w[2] == doctest::Approx(1.5));
    CHECK(w[3] == doctest::Approx(1.0));
}

TEST_CASE("measure diagnostics on explicit trajectories") {
    std::vector<double> times;
    for (int k = 0; k <= 40; ++k) times.push_back(-1.5 + 1.5 * k / 40);
    const Trajectory flat = stationary([](const Vec&) { return 2.0; }, 1.0 / 64, times);
    Cylinder Q;
    Q.r = 1;
    Q.alpha = 1.5;
    CHECK(growth_lemma_measure(flat, 2.5, Q) == doctest::Approx(1.0));
    CHECK(growth_lemma_measure(flat, 1.5, Q) == doctest::Approx(0.0));

    const WeakHarnackValue wh = weak_harnack_ratio(flat, 0.5, 1.5, 0);
    CHECK(wh.inf == doctest::Approx(2.0));
    // (2^eps |B_1/4 x [-1, -2^-alpha]|)^{1/eps}, with the ball read off the lattice.
    const double vol = 0.5 * (1 - std::exp2(-1.5));
    CHECK(wh.norm == doctest::Approx(std::pow(std::sqrt(2.0) * vol, 2)).epsilon(1e-2));

    const Trajectory neg = stationary([](const Vec&) { return -1.0; }, 1.0 / 64, times);
    CHECK_THROWS_AS(l_eps_norm(neg, 0.5, {}), DataError);

    const Trajectory ramp = stationary([](const Vec& x) { return x[0]; }, 1.0 / 256, times);
    const OscProfile prof = osc_and_fit(ramp, {{0, 0}, 0}, {0.5, 0.25, 0.125, 0.0625}, 1.5);
    CHECK(prof.gamma == doctest::Approx(1.0).epsilon(0.02));
    CHECK(prof.residual < 0.01);
    const OscProfile zero = osc_and_fit(flat, {{0, 0}, 0}, {0.5, 0.25}, 1.5);
    CHECK(zero.zero_osc);
}

TEST_CASE("regularity runs are reproducible") {
    RegularityOptions opt;
    opt.params.alpha = 1.5;
    opt.hx = 1.0 / 32;
    const RegularityRun a = regularity_run(opt, 4), b = regularity_run(opt, 4);
    CHECK(a.growth_fraction == b.growth_fraction);
    CHECK(a.harnack.ratio == b.harnack.ratio);
    CHECK(a.holder.gamma == b.holder.gamma);
    CHECK(a.growth_fraction > 0);
    CHECK(a.holder.gamma > 0);
}
