#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "nlreg/barrier.hpp"
#include "nlreg/errors.hpp"

using namespace nlreg;

namespace {

ClassParams unit_class(double alpha) {
    ClassParams p;
    p.alpha = alpha;
    p.lambda = 1;
    p.Lambda = 2;
    p.mu = 1;
    return p;
}

}  // namespace

TEST_CASE("profile ODE against closed forms") {
    SUBCASE("alpha = 1: f = C1^2 t^2") {
        const OdeProfile f = solve_barrier_ode(2.5, 1.0, -1.0);
        for (double t : {-1.0, -0.5, -0.1, -0.01})
            CHECK(f(t) == doctest::Approx(2.5 * 2.5 * t * t).epsilon(1e-6));
    }
    SUBCASE("alpha = 2: 2 sqrt f - 2 log(1 + sqrt f) = -C1 t") {
        const OdeProfile f = solve_barrier_ode(3.0, 2.0, -2.0);
        for (std::size_t i = 0; i < f.times().size(); i += 50) {
            const double s = std::sqrt(f.values()[i]);
            CHECK(2 * s - 2 * std::log1p(s) == doctest::Approx(-3.0 * f.times()[i]).epsilon(1e-6));
        }
    }
    SUBCASE("dominant power near t = 0") {
        for (double alpha : {0.6, 1.5}) {
            const double e = std::min(0.5, 1 - alpha / 2), t = -1e-6;
            const OdeProfile f = solve_barrier_ode(3.0, alpha, -0.5);
            CHECK(f(t) == doctest::Approx(std::pow(3.0 * (1 - e) * -t, 1 / (1 - e))).epsilon(0.05));
        }
    }
    SUBCASE("interpolant follows the right-hand side") {
        const OdeProfile f = solve_barrier_ode(3.0, 1.5, -1.0);
        CHECK(f(0.0) == 0.0);
        CHECK(f.T() == -1.0);
        for (double t : {-0.9, -0.5, -0.2}) {
            const double h = 1e-5, fd = (f(t + h) - f(t - h)) / (2 * h);
            CHECK(fd == doctest::Approx(f.derivative(t)).epsilon(1e-4));
            CHECK(f.derivative(t) < 0);
        }
    }
}

TEST_CASE("truncated parabola is a subsolution with the prescribed C1") {
    const ClassParams p = unit_class(1.5);
    const OdeProfile f = solve_barrier_ode(truncated_parabola_C1(p), 1.5, -0.01);
    const ParabolaReport rep = truncated_parabola_check(f, p, AnnulusGrid(1, std::ldexp(1.0, -10), 8, 32, 32), 6, 5);
    CHECK(rep.points > 0);
    CHECK(rep.max_residual <= 0);
}

TEST_CASE("bump profile") {
    const BumpSpec s{0.25, 2.0, 0.25};
    CHECK_NOTHROW(s.validate());
    const double a = 1 - s.c1, b = 1 - s.c1 / 2;
    CHECK(bump_radial(s, 0.1).v == doctest::Approx(std::pow(0.25, -2.0)));
    CHECK(bump_radial(s, 2.0).v == doctest::Approx(0.25));
    // C1 at the left end and C2 at the right end of the bridge.
    // The bridge has a third derivative near 1e6, so probe very close to the joints.
    const double e = 1e-12;
    CHECK(bump_radial(s, a + e).v == doctest::Approx(bump_radial(s, a - e).v));
    CHECK(bump_radial(s, a + e).d1 == doctest::Approx(0.0).epsilon(1e-6));
    for (auto pick : {+[](const RadialValue& r) { return r.v; }, +[](const RadialValue& r) { return r.d1; },
                      +[](const RadialValue& r) { return r.d2; }})
        CHECK(pick(bump_radial(s, b - e)) == doctest::Approx(pick(bump_radial(s, b + e))).epsilon(1e-6));
    double prev = bump_radial(s, 0).v;
    for (int i = 1; i <= 200; ++i) {
        const double v = bump_radial(s, 1.5 * i / 200).v;
        CHECK(v <= prev + 1e-12);
        prev = v;
    }
    const Field f = bump_field(s, 2, 4.0);
    CHECK(f({5, 0}) == 0.0);
    CHECK(f({0.3, 0.4}) == doctest::Approx(bump(s, {0.5, 0})));
    CHECK_THROWS_AS((BumpSpec{0.9, 1, 0.25}.validate()), SpecError);
    CHECK_THROWS_AS((BumpSpec{0.25, 0.5, 0.25}.validate()), SpecError);
}

TEST_CASE("shell sample points") {
    for (int d : {1, 2}) {
        const auto pts = shell_points(d, 0.25, 9);
        CHECK(pts.size() == 9);
        for (const Vec& x : pts) {
            CHECK(norm(x) >= 1 - 0.125 - 1e-12);
            CHECK(norm(x) <= 1 + 1e-12);
        }
    }
    CHECK_THROWS_AS(shell_points(1, 0.25, 1), ArgumentError);
}

TEST_CASE("built barrier satisfies its inequalities") {
    const ClassParams p = unit_class(1.5);
    const AnnulusGrid grid(1, std::ldexp(1.0, -10), 8, 32, 32);
    const BarrierBuild b = build_barrier(0.5, p, grid);
    CHECK(b.params.gamma1 > 0);
    CHECK(b.params.q1 >= 1);
    VerifyOptions vo;
    vo.n_x = 21;
    vo.n_t = 12;
    vo.throw_on_failure = false;
    const BarrierReport rep = verify_barrier(b.params, p, grid, vo);
    CHECK(rep.pass());

    const Barrier bar(b.params);
    CHECK_THROWS_AS(bar(Vec{0, 0}, 0.0), DomainError);
    for (double t : {0.05, 0.3, 1.0, 1.9})
        for (double x : {0.0, 0.3, 0.8}) {
            const double v = bar(Vec{x, 0}, t);
            CHECK(v >= 0);
            CHECK(v <= 1);
        }
    // Positivity fills B_{3/4} at later times. The value itself underflows for large q0,
    // so the support is read off the shape factor.
    for (double t : {1.0, 1.5})
        for (double x : {0.0, 0.5, 0.74}) CHECK(bar.shape(t)(Vec{x, 0}) > 0);
    CHECK(bar.shape(0.01)(Vec{0.74, 0}) == 0);
    // Inequality with a smaller gamma is no worse at the shell.
    const OrderingReport ord = gamma_ordering_check({b.params.gamma1, b.params.q1, b.params.c1},
                                                    b.params.gamma1 / 2, p, grid);
    CHECK(ord.violations == 0);
}
