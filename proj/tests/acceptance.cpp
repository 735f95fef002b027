// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "cli.hpp"
#include "nlreg/barrier.hpp"
#include "nlreg/covering.hpp"
#include "nlreg/errors.hpp"
#include "nlreg/kernel.hpp"
#include "nlreg/nonlocal_op.hpp"
#include "nlreg/solver.hpp"
#include "oracles.hpp"

using namespace nlreg;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string format(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void report(int id, const std::function<Outcome()>& body) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("%s criterion %d: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", id, o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
}

// ---------------------------------------------------------------------------------------------

Outcome quadrature_fidelity() {
    const double reference = oracle::frac_laplacian_of_cos_at_zero(1.0);
    const auto t0 = Clock::now();
    Field u;
    u.d = 1;
    u.value = [](const Vec& x) { return std::cos(x[0]); };
    u.sup_bound = 1;
    const AnnulusGrid quad(1, std::ldexp(1.0, -12), 8192, 64, 32, 0.05);
    const OperatorValue v = eval_linear(make_frac_laplacian(1, 1.0), u, {0, 0}, quad, 1.0);
    const double elapsed = seconds_since(t0);
    const double err_pi = std::abs(v.value + std::numbers::pi);
    const double err_ref = std::abs(v.value - reference);
    return {err_pi <= 1e-3 && err_ref <= 1e-3 && elapsed < 1.0,
            format("L cos(0) = %.9f, |+pi| = %.2e, |oracle| = %.2e, %.3fs", v.value, err_pi, err_ref, elapsed)};
}

Outcome kernel_class() {
    const ClassParams base;
    bool ok = true;
    std::string bad;
    int rings = 0;
    for (double alpha : {0.5, 1.0, 1.5, 1.9}) {
        ClassParams p = base;
        p.alpha = alpha;
        const AnnulusGrid grid(2, std::ldexp(1.0, -12), 64, 64, 32);
        const auto frac = check_assumptions(make_frac_laplacian(2, alpha), p, grid);
        const auto line = check_assumptions(make_line_kernel(2, alpha), p, grid);
        const auto both = check_assumptions(make_line_plus_frac(2, alpha), p, grid);
        const double first = frac.rings.front().r, last = 2 * frac.rings.back().r;
        if (first > std::ldexp(1.0, -12) || last < 64) {
            ok = false;
            bad += format(" a=%g range [%g,%g]", alpha, first, last);
        }
        for (std::size_t i = 0; i < frac.rings.size(); ++i) {
            const auto& f = frac.rings[i];
            const auto& l = line.rings[i];
            const auto& b = both.rings[i];
            const bool pattern = f.pass() && l.a1 && l.a2 && !l.a3 && l.a4 && b.pass();
            if (!pattern) {
                ok = false;
                bad += format(" a=%g r=%g", alpha, f.r);
            }
            ++rings;
        }
    }
    return {ok, format("%d rings checked, d=2, lambda=%g Lambda=%g mu=%g%s", rings, base.lambda, base.Lambda,
                       base.mu, bad.empty() ? "" : (", mismatches:" + bad).c_str())};
}

Outcome moment_bounds() {
    int violations = 0, checks = 0, constant_mismatch = 0;
    const std::vector<double> alphas{0.6, 0.9, 1.0, 1.3, 1.7};
    for (int seed = 1; seed <= 20; ++seed) {
        ClassParams p;
        p.alpha = alphas[seed % alphas.size()];
        const KernelSpec K = make_random_admissible(p, std::uint64_t(seed), 1);
        if (!check_assumptions(K, p, AnnulusGrid(1, std::ldexp(1.0, -8), 64)).all_pass()) ++violations;
        const auto series = oracle::dyadic_series(p.alpha);
        for (double r : {0.01, 0.1, 0.5, 1.0, 4.0}) {
            const MomentBoundsReport rep = moment_bounds_report(K, p, r);
            const std::pair<const MomentEntry*, double> entries[] = {
                {&rep.second_inner, series.second_inner * std::pow(r, 2 - p.alpha)},
                {&rep.first_inner, series.first_inner * std::pow(r, 1 - p.alpha)},
                {&rep.first_outer, series.first_outer * std::pow(r, 1 - p.alpha)},
                {&rep.tail, series.tail * std::pow(r, -p.alpha)}};
            for (const auto& [e, unit] : entries) {
                if (!e->applicable) continue;
                ++checks;
                const double bound = unit * p.Lambda;
                if (std::abs(e->bound - bound) > 1e-9 * bound) ++constant_mismatch;
                if (e->value > bound) ++violations;
            }
        }
    }
    return {violations == 0 && constant_mismatch == 0,
            format("%d inequalities over 20 kernels x 5 radii, %d violations, %d constant mismatches", checks,
                   violations, constant_mismatch)};
}

Outcome extremal_operators() {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> U(-1, 1);

    // Duality on sampled grid functions.
    double duality = 0;
    for (int k = 0; k < 50; ++k) {
        const int d = 1 + k % 2;
        ClassParams p;
        p.alpha = 0.6 + 0.65 * (U(rng) + 1);
        GridFunction u(d, 1.0, d == 1 ? 1.0 / 32 : 1.0 / 8);
        for (auto& v : u.values()) v = U(rng);
        u.set_far_constant(U(rng));
        GridFunction w = u;
        for (auto& v : w.values()) v = -v;
        w.set_far_constant(-u.far_constant());
        const AnnulusGrid quad(d, 1.0 / 64, 4, 8, 8);
        EvalOptions opt;
        opt.tol = 0;
        opt.keep_certificate = false;
        const Vec x{0.5 * U(rng), d == 2 ? 0.5 * U(rng) : 0.0};
        const auto mode = k % 4 < 2 ? ExtremalMode::symmetric : ExtremalMode::general;
        const double m = eval_extremal(p, u, x, Sign::minus, mode, quad, opt).value;
        const double pl = eval_extremal(p, w, x, Sign::plus, mode, quad, opt).value;
        duality = std::max(duality, std::abs(m + pl) / std::max(1.0, std::abs(m)));
    }

    // Ring optimum against brute-force vertex enumeration.
    int lp_rings = 0, lp_mismatch = 0;
    for (int d : {1, 2})
        for (int nr = 1; nr <= 4; ++nr)
            for (int na : {2, 4}) {
                if ((d == 1 && na == 4) || (d == 2 && nr * na > 8)) continue;
                for (double mu : {0.25, 0.5, 1.0})
                    for (double r : {0.0625, 0.5, 2.0}) {
                        ClassParams p;
                        p.alpha = 0.6 + 0.65 * (U(rng) + 1);
                        p.mu = mu;
                        const Ring ring = AnnulusGrid(d, r, 2 * r, nr, na).ring(r);
                        std::vector<double> delta(ring.cells.size());
                        for (double& v : delta) v = U(rng);
                        const auto P = AnnulusProblem::build(ring, p, delta);
                        for (auto sign : {Sign::minus, Sign::plus})
                            for (auto mode : {ExtremalMode::symmetric, ExtremalMode::general}) {
                                if (d == 2 && mode == ExtremalMode::general) continue;
                                const double a = solve_annulus(P, sign, mode).value;
                                const double b = oracle::ring_extremum(P, sign, mode);
                                ++lp_rings;
                                if (std::abs(a - b) > 1e-12 * std::max(1.0, std::abs(b))) ++lp_mismatch;
                            }
                    }
            }

    // Scaling: one refinement (r_min halved, radial cells doubled) should halve the defect.
    ClassParams p;
    p.alpha = 1.5;
    int halved = 0;
    std::string ratios;
    for (int inst = 0; inst < 10; ++inst) {
        const double c1 = U(rng), c2 = U(rng);
        const double s = inst % 2 ? 2.0 : 0.5;
        const Vec x{0.4 * U(rng), 0};
        auto b = [=](const Vec& y) {
            const double r2 = dot(y, y);
            return r2 < 1 ? std::pow(1 - r2, 4) * (1 + c1 * y[0] + c2 * y[0] * y[0]) : 0.0;
        };
        Field u, us;
        u.d = us.d = 1;
        u.value = b;
        us.value = [=](const Vec& y) { return b(s * y); };
        u.far_value = us.far_value = 0.0;
        u.far_radius = 1;
        us.far_radius = 1 / s;
        u.sup_bound = us.sup_bound = 3;
        EvalOptions opt;
        opt.tol = 0;
        opt.keep_certificate = false;
        auto defect = [&](const AnnulusGrid& g) {
            const double lhs = std::pow(s, -p.alpha) *
                               eval_extremal(p, us, x, Sign::minus, ExtremalMode::general, g, opt).value;
            const double rhs = eval_extremal(p, u, s * x, Sign::minus, ExtremalMode::general, g, opt).value;
            return std::abs(lhs - rhs);
        };
        const AnnulusGrid coarse(1, 1.0 / 64, 2, 8, 8);
        const AnnulusGrid fine(1, coarse.r_min() / 2, 2, coarse.n_radial() * 2, 8);
        const double ratio = defect(fine) / defect(coarse);
        if (ratio >= 0.375 && ratio <= 0.625) ++halved;
        ratios += format(" %.2f", ratio);
    }

    const bool ok = duality <= 1e-12 && lp_mismatch == 0 && halved == 10;
    return {ok, format("duality %.1e; LP vs vertex enumeration %d/%d rings agree; scaling ratios%s (%d/10 in "
                       "[0.375,0.625])",
                       duality, lp_rings - lp_mismatch, lp_rings, ratios.c_str(), halved)};
}

Outcome barrier() {
    // With mu = 1 the floor covers the whole ring, so the mass budget must be at least 2 lambda.
    ClassParams p;
    p.lambda = 1;
    p.Lambda = 2;
    p.mu = 1;
    p.C0 = 0;
    p.alpha0 = 0.5;
    std::string detail;
    bool ok = true;
    double worst_res = 0;
    int ordering_violations = 0;
    for (double alpha : {0.6, 1.0, 1.5, 1.9}) {
        p.alpha = alpha;
        const AnnulusGrid grid(1, std::ldexp(1.0, -10), 8, 32, 32);
        const BarrierBuild b = build_barrier(0.5, p, grid);
        VerifyOptions vo;
        vo.throw_on_failure = false;
        const BarrierReport rep = verify_barrier(b.params, p, grid.refined(), vo);
        worst_res = std::max({worst_res, rep.res1, rep.res2, rep.res3, rep.res4});
        ok = ok && rep.pass();
        const BumpSpec spec{b.params.gamma1, b.params.q1, b.params.c1};
        const OrderingReport ord = gamma_ordering_check(spec, b.params.gamma1 / 2, p, grid);
        ordering_violations += ord.violations;
        detail += format(" a=%g(q=%g,g=%g)", alpha, b.params.q1, b.params.gamma1);
    }
    // alpha = 2: 2 sqrt f - 2 log(1 + sqrt f) = -C1 t.
    const double C1 = 3.0;
    const OdeProfile prof = solve_barrier_ode(C1, 2.0, -2.0);
    double ode = 0;
    for (std::size_t i = 0; i < prof.times().size(); ++i) {
        const double s = std::sqrt(prof.values()[i]);
        ode = std::max(ode, std::abs(2 * s - 2 * std::log1p(s) + C1 * prof.times()[i]));
    }
    ok = ok && ordering_violations == 0 && ode <= 1e-6;
    return {ok, format("searches succeeded%s; max residual %.2e; gamma-ordering violations %d; ODE relation %.1e",
                       detail.c_str(), worst_res, ordering_violations, ode)};
}

Outcome solver() {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> U(-1, 1), P(0, 1);
    int violations = 0, pairs = 0;
    double const_err = 0, sup_increase = 0;
    bool cfl_raised = true;
    for (int d : {1, 2})
        for (auto op : {OperatorKind::linear, OperatorKind::extremal_minus, OperatorKind::extremal_plus}) {
            ParabolicProblem pr;
            pr.op = op;
            pr.params.alpha = 1.5;
            pr.kernel = make_line_plus_frac(d, 1.5);
            const double hx = d == 1 ? 1.0 / 32 : 1.0 / 8, R = 1.5;
            if (op != OperatorKind::linear) {
                pr.drift_C0 = 0.7;
                pr.drift = [](const Vec& x) { return Vec{x[1], -0.5 * x[0]}; };
            }
            pr.initial = GridFunction(d, R, hx);
            pr.initial.set_far_constant(0.2);
            const Stepper st(pr);
            const double dt = st.cfl_dt();
            for (int k = 0; k < 100; ++k) {
                GridFunction u(d, R, hx), v(d, R, hx);
                u.set_far_constant(0.2);
                v.set_far_constant(0.2 + 0.1 * P(rng));
                for (std::size_t i = 0; i < u.size(); ++i) {
                    u[i] = U(rng);
                    v[i] = u[i] + (P(rng) < 0.5 ? 0 : P(rng));
                }
                const GridFunction a = st.step(u, 0, dt), b = st.step(v, 0, dt);
                ++pairs;
                for (std::size_t i = 0; i < u.size(); ++i)
                    if (a[i] > b[i] + 1e-13) {
                        ++violations;
                        break;
                    }
            }
            GridFunction c(d, R, hx);
            c.set_far_constant(2.5);
            for (auto& x : c.values()) x = 2.5;
            const GridFunction cc = st.step(c, 0, dt);
            for (std::size_t i = 0; i < c.size(); ++i) const_err = std::max(const_err, std::abs(cc[i] - 2.5));

            bool raised = false;
            try {
                st.step(c, 0, 1.01 / st.max_weight());
            } catch (const StepError&) {
                raised = true;
            }
            cfl_raised = cfl_raised && raised;

            // Homogeneous run from a bump with zero exterior data.
            ParabolicProblem h = pr;
            h.initial = GridFunction::sample(d, R, hx, [](const Vec& x) { return std::exp(-4 * dot(x, x)) - 0.3; });
            h.initial.set_far_constant(0);
            h.t0 = 0;
            h.t1 = d == 1 ? 0.2 : 0.05;
            const Trajectory tr = solve(h);
            double prev = std::numeric_limits<double>::infinity();
            for (const auto& f : tr.frames) {
                double sup = 0;
                for (double x : f.values()) sup = std::max(sup, std::abs(x));
                sup_increase = std::max(sup_increase, sup - prev);
                prev = sup;
            }
        }
    const bool ok = violations == 0 && const_err <= 1e-12 && sup_increase <= 1e-14 && cfl_raised;
    return {ok, format("%d ordered pairs, %d comparison violations; constant drift %.1e; sup-norm increase %.1e; "
                       "CFL violation %s",
                       pairs, violations, const_err, sup_increase, cfl_raised ? "raised" : "NOT raised")};
}

Outcome regularity() {
    RegularityOptions opt;
    opt.params.alpha = 1.5;
    double delta = 1, C6 = 0, gamma_min = std::numeric_limits<double>::infinity(), residual = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const RegularityRun r = regularity_run(opt, seed);
        delta = std::min(delta, r.growth_fraction);
        C6 = std::max(C6, r.harnack.ratio);
        gamma_min = std::min(gamma_min, r.holder.gamma);
        residual = std::max(residual, r.holder.residual);
    }
    const bool ok = delta >= 0.01 && std::isfinite(C6) && gamma_min > 0 && residual < 0.2;
    return {ok, format("empirical A=%g delta=%.3f; eps=%g C6=%.3f; min gamma=%.3f, max fit residual %.3f", opt.A,
                       delta, opt.eps, C6, gamma_min, residual)};
}

Outcome covering() {
    std::mt19937_64 g(1);
    std::uniform_real_distribution<double> U(0, 1);

    int interval_fail = 0, union_mismatch = 0;
    for (int k = 0; k < 10000; ++k) {
        const int n = 1 + int(U(g) * 10);
        std::vector<double> a(n), h(n);
        const double m = 1 + std::floor(U(g) * 8);
        std::vector<std::pair<double, double>> big, top;
        for (int i = 0; i < n; ++i) {
            a[i] = 4 * U(g);
            h[i] = 0.01 + U(g);
            big.emplace_back(a[i], a[i] + (m + 1) * h[i]);
            top.emplace_back(a[i] + h[i], a[i] + (m + 1) * h[i]);
        }
        const IntervalLemmaResult r = interval_lemma_check(a, h, m);
        const double lhs = oracle::union_length(big), rhs = oracle::union_length(top);
        if (std::abs(r.lhs - lhs) > 1e-12 || std::abs(r.rhs - rhs) > 1e-12) ++union_mismatch;
        if (!r.pass || lhs > (m + 1) / m * rhs * (1 + 1e-12)) ++interval_fail;
    }
    const IntervalLemmaResult tight = interval_lemma_check({0.0}, {1.0}, 3.0);
    const bool is_tight = tight.lhs == 4.0 && tight.rhs == 3.0 && tight.pass;

    int vitali_bad = 0;
    for (int f = 0; f < 20; ++f) {
        const int d = 1 + f % 2;
        const double alpha = std::min(1.9, 1.4 + 0.5 * U(g));
        std::vector<Cylinder> cyl;
        for (int i = 0; i < 50; ++i) {
            Cylinder q;
            q.d = d;
            q.alpha = alpha;
            q.r = 0.02 + 0.15 * U(g);
            q.x = {2 * U(g) - 1, d == 2 ? 2 * U(g) - 1 : 0};
            q.t = U(g);
            cyl.push_back(q);
        }
        const RasterSet raster(d, d == 1 ? 400 : 80, -0.2, 1.0, 200);
        const VitaliCheck v = vitali_cover_check(cyl, raster);
        // Independent raster test: every covered cell lies in a 5-fold dilation of a selected cylinder,
        // and the selected cylinders are pairwise disjoint.
        auto in = [&](const Cylinder& q, double k, const SpaceTimePoint& z) {
            const double tc = q.t - std::pow(q.r, alpha) / 2, half = std::pow(k * q.r, alpha) / 2;
            const double dx = z.x[0] - q.x[0], dy = z.x[1] - q.x[1];
            return std::hypot(dx, dy) < k * q.r && z.t > tc - half && z.t <= tc + half;
        };
        bool ok = v.pass();
        for (std::size_t i = 0; i < v.selected.size() && ok; ++i)
            for (std::size_t j = i + 1; j < v.selected.size() && ok; ++j) {
                const Cylinder &a = cyl[v.selected[i]], &b = cyl[v.selected[j]];
                const bool space = std::hypot(a.x[0] - b.x[0], a.x[1] - b.x[1]) < a.r + b.r;
                const bool time = std::max(a.t - std::pow(a.r, alpha), b.t - std::pow(b.r, alpha)) < std::min(a.t, b.t);
                if (space && time) ok = false;
            }
        for (std::size_t c = 0; c < raster.size() && ok; ++c) {
            const SpaceTimePoint z = raster.center(c);
            bool covered = false, dilated = false;
            for (const auto& q : cyl) covered = covered || in(q, 1, z);
            if (!covered) continue;
            for (int s : v.selected) dilated = dilated || in(cyl[s], 5, z);
            if (!dilated) ok = false;
        }
        if (!ok) ++vitali_bad;
    }

    bool ink_ok = true;
    std::string ink;
    for (int d : {1, 2}) {
        const double alpha = 1.0;
        const InkSpotsInstance inst = make_ink_spots_instance(d, alpha, 0.5, 2.0, d == 1 ? 128 : 48, 96);
        const InkSpotsReport r = ink_spots_check(inst.E, inst.F, inst.mu, inst.m, inst.probes);
        const double c = std::pow(5.0, -d - alpha);
        const double E = double(inst.E.count()) * inst.E.cell_volume();
        const double F = double(inst.F.count()) * inst.F.cell_volume();
        const double rhs = (inst.m + 1) / inst.m * (1 - c * inst.mu) * F;
        ink_ok = ink_ok && r.pass() && E <= rhs && std::abs(r.c - c) < 1e-15;
        ink += format(" d=%d |E|=%.4f <= %.4f", d, E, rhs);
    }

    const bool ok = interval_fail == 0 && union_mismatch == 0 && is_tight && vitali_bad == 0 && ink_ok;
    return {ok, format("interval lemma %d/10000 fail, %d union mismatches, single interval %g <= %g; Vitali %d/20 "
                       "families bad; ink spots%s",
                       interval_fail, union_mismatch, tight.lhs, 4.0 / 3 * tight.rhs, vitali_bad, ink.c_str())};
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

Outcome reproducibility() {
    const fs::path root = fs::temp_directory_path() / format("nlreg_repro_%d", int(::getpid()));
    fs::remove_all(root);
    const std::vector<std::string> commands{"check-kernel", "eval-op",        "build-barrier", "solve",
                                            "measure-holder", "weak-harnack", "covering-demo"};
    int compared = 0, differing = 0;
    std::string bad;
    for (const auto& cmd : commands) {
        for (const char* run : {"a", "b"}) {
            const int code = nlreg::cli::run({cmd, "--seed", "17", "--out", (root / cmd / run).string()});
            if (code != 0) {
                ++differing;
                bad += " " + cmd + "(exit " + std::to_string(code) + ")";
            }
        }
        for (const auto& e : fs::directory_iterator(root / cmd / "a")) {
            const auto ext = e.path().extension();
            if (ext != ".csv" && ext != ".bin" && e.path().filename() != "barrier.json") continue;
            ++compared;
            if (slurp(e.path()) != slurp(root / cmd / "b" / e.path().filename())) {
                ++differing;
                bad += " " + cmd + "/" + e.path().filename().string();
            }
        }
    }
    fs::remove_all(root);
    return {differing == 0 && compared > 0,
            format("%zu subcommands, %d artifacts compared byte for byte, %d differ%s", commands.size(), compared,
                   differing, bad.c_str())};
}

}  // namespace

int main() {
    report(1, quadrature_fidelity);
    report(2, kernel_class);
    report(3, moment_bounds);
    report(4, extremal_operators);
    report(5, barrier);
    report(6, solver);
    report(7, regularity);
    report(8, covering);
    report(9, reproducibility);
    return failures == 0 ? 0 : 1;
}
