#include "nlreg/nonlocal_op.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "nlreg/errors.hpp"
#include "nlreg/lp.hpp"

namespace nlreg {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr int kPolygonSides = 16;

bool compensated(Regime kind, const Vec& h) {
    return kind == Regime::super || (kind == Regime::critical && norm(h) < 1.0);
}

// Taylor model of the difference for |h| small.
double taylor_delta(Regime kind, const Vec& h, const Vec& g, const Mat& H) {
    double v = 0.5 * quad_form(H, h);
    if (!compensated(kind, h)) v += dot(g, h);
    return v;
}

// Coarse grid for rings where the integrand is an explicit smooth model.
AnnulusGrid model_grid(const AnnulusGrid& q) { return AnnulusGrid(q.d(), 1.0, 2.0, q.n_radial(), q.n_angular()); }

}  // namespace

Regime regime_for(double alpha) {
    if (alpha < 1) return Regime::sub;
    if (alpha == 1) return Regime::critical;
    return Regime::super;
}

double delta_h(const Field& u, const Vec& x, const Vec& h, Regime kind, double u0, const Vec& grad) {
    double v = u(x + h) - u0;
    if (compensated(kind, h)) v -= dot(grad, h);
    if (!std::isfinite(v)) throw EvaluationError("difference is not finite");
    return v;
}

double delta_h(const Field& u, const Vec& x, const Vec& h, Regime kind) {
    const Vec g = kind == Regime::sub ? Vec{0, 0} : u.gradient(x);
    return delta_h(u, x, h, kind, u(x), g);
}

double delta_h(const GridFunction& u, const Vec& x, const Vec& h, Regime kind) {
    return delta_h(u.view(), x, h, kind);
}

// ---------------------------------------------------------------------------------------------
// Ring problem

AnnulusProblem AnnulusProblem::build(const Ring& ring, const ClassParams& p, std::vector<double> delta) {
    AnnulusProblem a;
    a.d = ring.d;
    a.r = ring.r;
    a.cells = ring.cells;
    a.antipode = ring.antipode;
    a.delta = std::move(delta);
    a.budget = p.budget(ring.r);
    a.floor_level = p.floor_level(ring.d, ring.r);
    a.mu = p.mu;
    a.odd_cap = p.odd_cap(ring.r);
    a.volume = ring.volume;
    return a;
}

int AnnulusProblem::floor_pairs() const {
    const int npair = static_cast<int>(cells.size() / 2);
    return std::min(npair, static_cast<int>(std::ceil(mu * npair - 1e-9)));
}

void AnnulusProblem::validate() const {
    const std::size_t n = cells.size();
    if (n == 0 || n % 2 || antipode.size() != n || delta.size() != n)
        throw ParameterError("ring problem needs paired cells and one difference per cell");
    for (std::size_t c = 0; c < n; ++c) {
        const int a = antipode[c];
        if (a < 0 || std::size_t(a) >= n || antipode[a] != int(c) || a == int(c))
            throw ParameterError("antipodal map is not an involution");
    }
    const double floor_mass = floor_level * 2 * floor_pairs() * cells[0].vol;
    if (floor_mass > budget * (1 + 1e-12))
        throw ParameterError("ring problem infeasible: floor mass exceeds the budget");
}

AnnulusSolution solve_annulus(const AnnulusProblem& prob, Sign sign, ExtremalMode mode) {
    prob.validate();
    const std::size_t n = prob.cells.size();
    // Work with the minimization; plus is the negated minimum of the negated differences.
    std::vector<double> dl(prob.delta);
    if (sign == Sign::plus)
        for (double& v : dl) v = -v;

    std::vector<int> pair_lo;
    for (std::size_t c = 0; c < n; ++c)
        if (int(c) < prob.antipode[c]) pair_lo.push_back(int(c));
    auto pair_sum = [&](int c) { return dl[c] + dl[prob.antipode[c]]; };
    std::vector<int> order(pair_lo);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        const double sa = pair_sum(a), sb = pair_sum(b);
        return sa < sb || (sa == sb && a < b);
    });

    AnnulusSolution sol;
    sol.density.assign(n, 0.0);
    const double F = prob.floor_level;
    const int fp = prob.floor_pairs();
    double floor_vol = 0, value = 0;
    for (int i = 0; i < fp; ++i) {
        for (int c : {order[i], prob.antipode[order[i]]}) {
            sol.density[c] = F;
            sol.floor_cells.push_back(c);
            floor_vol += prob.cells[c].vol;
            value += F * dl[c] * prob.cells[c].vol;
        }
    }
    std::sort(sol.floor_cells.begin(), sol.floor_cells.end());
    double rest = prob.budget - F * floor_vol;
    if (rest < -1e-12 * prob.budget) throw ParameterError("ring problem infeasible: floor mass exceeds the budget");
    rest = std::max(rest, 0.0);

    if (rest > 0) {
        if (mode == ExtremalMode::symmetric) {
            const int best = order.front();
            const double s = pair_sum(best);
            if (s < 0) {
                const int c2 = prob.antipode[best];
                sol.density[best] += 0.5 * rest / prob.cells[best].vol;
                sol.density[c2] += 0.5 * rest / prob.cells[c2].vol;
                value += 0.5 * rest * dl[best] + 0.5 * rest * dl[c2];
            }
        } else {
            // Residual masses y_c >= 0: sum y <= rest, |sum h y| within the cap.
            std::vector<std::vector<double>> A;
            std::vector<double> b;
            A.emplace_back(n, 1.0);
            b.push_back(rest);
            const double inv_r = 1.0 / prob.r;
            if (prob.d == 1) {
                std::vector<double> row(n);
                for (std::size_t c = 0; c < n; ++c) row[c] = prob.cells[c].h[0] * inv_r;
                A.push_back(row);
                for (double& v : row) v = -v;
                A.push_back(row);
                b.push_back(prob.odd_cap * inv_r);
                b.push_back(prob.odd_cap * inv_r);
            } else {
                const double lim = prob.odd_cap * inv_r * std::cos(std::numbers::pi / kPolygonSides);
                for (int j = 0; j < kPolygonSides; ++j) {
                    const double th = 2 * std::numbers::pi * j / kPolygonSides;
                    const Vec nj{std::cos(th), std::sin(th)};
                    std::vector<double> row(n);
                    for (std::size_t c = 0; c < n; ++c) row[c] = dot(nj, prob.cells[c].h) * inv_r;
                    A.push_back(std::move(row));
                    b.push_back(lim);
                }
            }
            const lp::Result res = lp::minimize(dl, A, b);
            for (std::size_t c = 0; c < n; ++c)
                if (res.x[c] > 0) sol.density[c] += res.x[c] / prob.cells[c].vol;
            value += res.value;
        }
    }
    sol.value = sign == Sign::plus ? -value : value;
    return sol;
}

KernelSpec ExtremalCertificate::kernel() const { return piecewise_kernel(rings, densities); }

double ExtremalCertificate::reintegrate(const Field& u, const Vec& x, Regime kind) const {
    const double u0 = u(x);
    const Vec g = kind == Regime::sub ? Vec{0, 0} : u.gradient(x);
    double total = 0;
    for (std::size_t i = 0; i < rings.size(); ++i) {
        double ring_total = 0;
        for (std::size_t c = 0; c < rings[i].cells.size(); ++c) {
            const Cell& cell = rings[i].cells[c];
            ring_total += delta_h(u, x, cell.h, kind, u0, g) * densities[i][c] * cell.vol;
        }
        total += ring_total;
    }
    return total;
}

// ---------------------------------------------------------------------------------------------
// Linear operators

namespace {

struct LinearRing {
    double value = 0;
    double mass = 0;
    Vec moment{0, 0};
};

template <class Delta>
LinearRing linear_ring(const KernelSpec& K, const AnnulusGrid& grid, double r, Delta&& delta) {
    LinearRing out;
    if (K.density) {
        const Ring R = grid.ring(r);
        for (const auto& c : R.cells) {
            const double m = K.eval(c.h) * c.vol;
            if (m == 0) continue;
            out.value += delta(c.h) * m;
            out.mass += m;
            out.moment = out.moment + m * c.h;
        }
    }
    for (const auto& L : K.lines) {
        for (const auto& [s, w] : grid.line_cells(r)) {
            const double m = L.radial_density(s) * w;
            if (!std::isfinite(m)) throw KernelEvalError("line density is not finite");
            if (m == 0) continue;
            const Vec h = s * L.direction;
            out.value += delta(h) * m;
            out.mass += m;
            out.moment = out.moment + m * h;
        }
    }
    return out;
}

}  // namespace

OperatorValue eval_linear(const KernelSpec& K, const Field& u, const Vec& x, const AnnulusGrid& quad, double alpha,
                          const EvalOptions& opt) {
    if (K.d != quad.d() || K.d != u.d) throw ArgumentError("kernel, grid and function dimensions differ");
    if (!(alpha > 0 && alpha < 2)) throw ArgumentError("alpha must lie in (0,2)");
    const Regime kind = regime_for(alpha);
    const double u0 = u(x);
    const Vec g = u.gradient(x);
    auto exact = [&](const Vec& h) { return delta_h(u, x, h, kind, u0, g); };

    OperatorValue out;
    double total = 0;
    double r_end = quad.r_min();
    for (double r : quad.radii()) {
        total += linear_ring(K, quad, r, exact).value;
        ++out.ring_count;
        r_end = 2 * r;
    }
    const double reach = norm(x) + u.far_radius;
    while (u.far_value && r_end < reach && out.ring_count < 400) {
        total += linear_ring(K, quad, r_end, exact).value;
        ++out.ring_count;
        r_end *= 2;
    }

    // Inner ball: Taylor model ring by ring until the contributions vanish.
    const Mat H = u.hessian(x);
    double inner = 0, last = 0;
    for (int k = 1; k <= 200; ++k) {
        const double rk = std::ldexp(quad.r_min(), -k);
        last = linear_ring(K, quad, rk, [&](const Vec& h) { return taylor_delta(kind, h, g, H); }).value;
        inner += last;
        if (k > 8 && std::abs(last) <= 1e-17 * (1 + std::abs(total))) break;
    }
    out.inner = inner;
    out.error_bar += std::abs(last) + quad.r_min() * std::abs(inner);

    // Tail beyond r_end.
    const AnnulusGrid coarse = model_grid(quad);
    double tail = 0, tail_mass = 0;
    Vec tail_moment{0, 0};
    last = 0;
    const bool far_known = u.far_value && r_end >= reach;
    const double a = far_known ? *u.far_value - u0 : 0.0;
    for (int k = 0; k < 200; ++k) {
        const double rk = std::ldexp(r_end, k);
        const LinearRing lr = linear_ring(K, coarse, rk, [&](const Vec& h) {
            return (compensated(kind, h) ? -dot(g, h) : 0.0) + (far_known ? a : -u0);
        });
        tail += lr.value;
        tail_mass += lr.mass;
        tail_moment = tail_moment + lr.moment;
        last = lr.value;
        if (k > 8 && std::abs(last) <= 1e-17 * (1 + std::abs(total)) && lr.mass <= 1e-17 * (1 + tail_mass)) break;
    }
    out.tail = tail;
    out.error_bar += std::abs(last);
    if (!far_known) {
        // The unknown part is int u(x+h) K over the tail, bounded by sup|u| times the tail mass.
        out.error_bar += u.sup_bound ? *u.sup_bound * tail_mass : (tail_mass > 0 ? kInf : 0.0);
    }
    out.value = total + inner + tail;
    if (!std::isfinite(out.value)) throw EvaluationError("operator value is not finite");
    if (opt.tol > 0 && out.error_bar > opt.tol)
        throw AccuracyError("operator error bar " + std::to_string(out.error_bar) + " exceeds tolerance");
    return out;
}

OperatorValue eval_linear(const KernelSpec& K, const GridFunction& u, const Vec& x, const AnnulusGrid& quad,
                          double alpha, const EvalOptions& opt) {
    u.validate();
    return eval_linear(K, u.view(), x, quad, alpha, opt);
}

// ---------------------------------------------------------------------------------------------
// Extremal operators

namespace {

template <class Delta>
AnnulusSolution extremal_ring(const ClassParams& p, const Ring& R, Sign sign, ExtremalMode mode, Delta&& delta) {
    std::vector<double> dv(R.cells.size());
    for (std::size_t c = 0; c < R.cells.size(); ++c) dv[c] = delta(R.cells[c].h);
    return solve_annulus(AnnulusProblem::build(R, p, std::move(dv)), sign, mode);
}

}  // namespace

ExtremalResult eval_extremal(const ClassParams& p, const Field& u, const Vec& x, Sign sign, ExtremalMode mode,
                             const AnnulusGrid& quad, const EvalOptions& opt) {
    p.validate();
    if (u.d != quad.d()) throw ArgumentError("function and grid dimensions differ");
    const Regime kind = regime_for(p.alpha);
    const double alpha = p.alpha;
    const double u0 = u(x);
    const Vec g = u.gradient(x);
    auto exact = [&](const Vec& h) { return delta_h(u, x, h, kind, u0, g); };

    ExtremalResult out;
    auto& cert = out.certificate;
    double total = 0;
    double r_end = quad.r_min();
    auto explicit_ring = [&](double r) {
        Ring R = quad.ring(r);
        AnnulusSolution s = extremal_ring(p, R, sign, mode, exact);
        total += s.value;
        ++out.ring_count;
        if (opt.keep_certificate) {
            cert.ring_values.push_back(s.value);
            cert.densities.push_back(std::move(s.density));
            cert.floor_sets.push_back(std::move(s.floor_cells));
            cert.rings.push_back(std::move(R));
        }
    };
    for (double r : quad.radii()) {
        explicit_ring(r);
        r_end = 2 * r;
    }
    const double reach = norm(x) + u.far_radius;
    while (u.far_value && r_end < reach && out.ring_count < 400) {
        explicit_ring(r_end);
        r_end *= 2;
    }
    cert.explicit_total = total;

    const AnnulusGrid coarse = model_grid(quad);
    const Ring unit = coarse.ring(1.0);

    // Inner ball below r_min.
    const Mat H = u.hessian(x);
    double inner = 0;
    const double rmin = quad.r_min();
    if (kind == Regime::sub) {
        double r = rmin;
        for (int k = 0; k < opt.inner_octaves; ++k) {
            r *= 0.5;
            inner += extremal_ring(p, coarse.ring(r), sign, mode,
                                   [&](const Vec& h) { return taylor_delta(kind, h, g, H); })
                         .value;
        }
        // Leading term g.h scales like r^{1-alpha}.
        const double v1 = extremal_ring(p, unit, sign, mode, [&](const Vec& h) { return dot(g, h); }).value;
        const double q = std::exp2(-(1 - alpha));
        const double rest = v1 * std::pow(r, 1 - alpha) * q / (1 - q);
        inner += rest;
        out.error_bar += std::abs(rest) * 1e-6;
    } else {
        // Quadratic model: each ring contributes r^{2-alpha} times the unit-ring value.
        const double v2 =
            extremal_ring(p, unit, sign, mode, [&](const Vec& h) { return 0.5 * quad_form(H, h); }).value;
        const double q = std::exp2(-(2 - alpha));
        inner = v2 * std::pow(rmin, 2 - alpha) * q / (1 - q);
    }
    out.inner = inner;
    out.error_bar += rmin * std::abs(inner);

    // Tail beyond r_end.
    double tail = 0;
    if (u.far_value && r_end >= reach) {
        const double a = *u.far_value - u0;
        auto model = [&](const Vec& h) { return a - (compensated(kind, h) ? dot(g, h) : 0.0); };
        double r = r_end, last = 0;
        for (int k = 0; k < opt.tail_octaves; ++k, r *= 2) {
            last = extremal_ring(p, coarse.ring(r), sign, mode, model).value;
            tail += last;
        }
        const bool grad_term = kind == Regime::super && norm(g) > 0;
        const double q = grad_term ? std::exp2(1 - alpha) : std::exp2(-alpha);
        const double rest = last * q / (1 - q);
        tail += rest;
        out.error_bar += std::abs(rest);
    } else {
        const double mass = (2 - alpha) * p.Lambda * std::pow(r_end, -alpha) / (1 - std::exp2(-alpha));
        double bar = u.sup_bound ? (*u.sup_bound + std::abs(u0)) * mass : kInf;
        if (kind == Regime::super)
            bar += norm(g) * p.Lambda * (alpha - 1) * std::pow(r_end, 1 - alpha) / (1 - std::exp2(1 - alpha));
        out.error_bar += bar;
    }
    out.tail = tail;
    out.value = total + inner + tail;
    if (!std::isfinite(out.value)) throw EvaluationError("extremal value is not finite");
    if (opt.tol > 0 && out.error_bar > opt.tol)
        throw AccuracyError("extremal error bar " + std::to_string(out.error_bar) + " exceeds tolerance");
    return out;
}

ExtremalResult eval_extremal(const ClassParams& p, const GridFunction& u, const Vec& x, Sign sign,
                             ExtremalMode mode, const AnnulusGrid& quad, const EvalOptions& opt) {
    u.validate();
    return eval_extremal(p, u.view(), x, sign, mode, quad, opt);
}

double eval_isaacs(const std::vector<std::vector<KernelSpec>>& families, const Field& u, const Vec& x,
                   const AnnulusGrid& quad, double alpha, const EvalOptions& opt) {
    if (families.empty()) throw ArgumentError("Isaacs operator needs at least one family");
    double inf = kInf;
    for (const auto& fam : families) {
        if (fam.empty()) throw ArgumentError("Isaacs operator family is empty");
        double sup = -kInf;
        for (const auto& K : fam) sup = std::max(sup, eval_linear(K, u, x, quad, alpha, opt).value);
        inf = std::min(inf, sup);
    }
    return inf;
}

// ---------------------------------------------------------------------------------------------
// Drift

double upwind_gradient_norm(const Field& u, const Vec& x, double step) {
    const double u0 = u(x);
    double s = 0;
    for (int k = 0; k < u.d; ++k) {
        Vec xp = x, xm = x;
        xp[k] += step;
        xm[k] -= step;
        const double dm = (u0 - u(xm)) / step, dp = (u(xp) - u0) / step;
        const double a = std::max(dm, 0.0), b = std::min(dp, 0.0);
        s += a * a + b * b;
    }
    return std::sqrt(s);
}

double drift_and_gradient(const Field& u, const Vec& x, const DriftSpec& drift, double alpha, double step) {
    if (!(step > 0)) throw ArgumentError("difference step must be positive");
    if (drift.b) {
        const Vec b = *drift.b;
        if (alpha < 1 && norm(b) > 0) throw ModeError("drift is only admitted for alpha >= 1");
        const double u0 = u(x);
        double v = 0;
        for (int k = 0; k < u.d; ++k) {
            if (b[k] == 0) continue;
            Vec y = x;
            y[k] += b[k] > 0 ? -step : step;
            const double d = b[k] > 0 ? (u0 - u(y)) / step : (u(y) - u0) / step;
            v += b[k] * d;
        }
        return v;
    }
    if (drift.C0 < 0) throw ArgumentError("C0 must be nonnegative");
    if (drift.C0 == 0) return 0.0;
    if (alpha < 1) throw ModeError("drift is only admitted for alpha >= 1");
    return drift.C0 * upwind_gradient_norm(u, x, step);
}

// ---------------------------------------------------------------------------------------------
// Classical bound

double classical_bound(const ClassParams& p, double A, double B, double grad_norm, double r_min, double* r_used) {
    if (!(A > 0) || !(B > 0)) throw ArgumentError("classical bound needs A > 0 and B > 0");
    const double a = p.alpha, L = p.Lambda;
    const double k = std::round(std::log2(std::sqrt(B / A) / r_min));
    const double r = std::ldexp(r_min, static_cast<int>(k));
    if (r_used) *r_used = r;
    double bound = 0.5 * A * dyadic_constants::second_moment_inner(a) * L * std::pow(r, 2 - a) +
                   2 * B * dyadic_constants::tail_mass(a) * L * std::pow(r, -a);
    if (a < 1) bound += grad_norm * dyadic_constants::first_moment_inner(a) * L * std::pow(r, 1 - a);
    if (a > 1) bound += grad_norm * dyadic_constants::first_moment_outer(a) * L * std::pow(r, 1 - a);
    return bound;
}

ClassicalBoundReport classical_bound_check(const ClassParams& p, const Field& u, double A, double B, const Vec& x,
                                           const AnnulusGrid& quad) {
    ClassicalBoundReport rep;
    rep.bound = classical_bound(p, A, B, norm(u.gradient(x)), quad.r_min(), &rep.r);
    EvalOptions opt;
    opt.tol = 0;
    opt.keep_certificate = false;
    const auto plus = eval_extremal(p, u, x, Sign::plus, ExtremalMode::general, quad, opt);
    const auto minus = eval_extremal(p, u, x, Sign::minus, ExtremalMode::general, quad, opt);
    rep.plus = plus.value;
    rep.minus = minus.value;
    rep.error_bar = std::max(plus.error_bar, minus.error_bar);
    rep.pass = std::abs(rep.plus) <= rep.bound && std::abs(rep.minus) <= rep.bound;
    return rep;
}

}  // namespace nlreg
