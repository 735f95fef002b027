#include "nlreg/solver.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>
#include <random>

#include "nlreg/errors.hpp"
#include "nlreg/nonlocal_op.hpp"
#include "nlreg/parallel.hpp"

namespace nlreg {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr int kOctaves = 60;

using Offset = std::array<int, 2>;

// One linear lattice operator: offset weights, the inner second moment per axis, the mass
// beyond the window and the first-order term left after compensation.
struct LinStencil {
    std::vector<double> w;
    Vec a{0, 0};    // half the second moment of the central cell, per axis
    double tail = 0;
    Vec drift{0, 0};  // D in D . grad u
    double total(double hx, int d) const {
        double s = tail;
        for (double v : w) s += v;
        for (int k = 0; k < d; ++k) s += 2 * a[k] / (hx * hx) + std::abs(drift[k]) / hx;
        return s;
    }
};

double kernel_at(const KernelSpec& K, const Vec& h) { return K.density ? K.eval(h) : 0.0; }

// Midpoint sum of K over the square (interval) with lower corner c and side s, split n ways per axis.
template <class F>
void cell_quadrature(int d, const Vec& c, double s, int n, F&& f) {
    const double e = s / n, vol = d == 1 ? e : e * e;
    for (int i = 0; i < n; ++i) {
        if (d == 1) {
            f(Vec{c[0] + (i + 0.5) * e, 0}, vol);
            continue;
        }
        for (int j = 0; j < n; ++j) f(Vec{c[0] + (i + 0.5) * e, c[1] + (j + 0.5) * e}, vol);
    }
}

// Shell between half-sides s/2 and s around the origin, as sub-squares of side s/2.
template <class F>
void shell_quadrature(int d, double s, int n, F&& f) {
    if (d == 1) {
        cell_quadrature(1, {s / 2, 0}, s / 2, n, f);
        cell_quadrature(1, {-s, 0}, s / 2, n, f);
        return;
    }
    const double q = s / 2;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            if ((i == 1 || i == 2) && (j == 1 || j == 2)) continue;
            cell_quadrature(2, {-s + i * q, -s + j * q}, q, n, f);
        }
}

struct Lattice {
    int d = 1;
    int n = 0;    // nodes per axis
    double R = 0, hx = 0;
    int nw = 0;   // window half-width in cells
    std::vector<Offset> offsets;
    std::vector<std::size_t> active;  // node indices that evolve

    Vec pos(int i, int j) const { return {-R + (i + 0.5) * hx, d == 2 ? -R + (j + 0.5) * hx : 0.0}; }
    std::array<int, 2> ij(std::size_t idx) const {
        return d == 1 ? std::array<int, 2>{int(idx), 0} : std::array<int, 2>{int(idx % n), int(idx / n)};
    }
    bool inside(int i, int j) const { return i >= 0 && i < n && (d == 1 ? j == 0 : (j >= 0 && j < n)); }
    std::size_t index(int i, int j) const { return d == 1 ? std::size_t(i) : std::size_t(j) * n + i; }
};

LinStencil build_stencil(const KernelSpec& K, double alpha, const Lattice& L, int sub) {
    const int d = L.d;
    const double hx = L.hx;
    const Regime kind = regime_for(alpha);
    LinStencil st;
    st.w.assign(L.offsets.size(), 0.0);
    std::vector<int> slot;  // offset -> position in L.offsets, over the full window cube
    const int side = 2 * L.nw + 1;
    slot.assign(std::size_t(side) * (d == 2 ? side : 1), -1);
    auto slot_of = [&](int a, int b) -> int& {
        return slot[std::size_t(a + L.nw) + (d == 2 ? std::size_t(b + L.nw) * side : 0)];
    };
    for (std::size_t k = 0; k < L.offsets.size(); ++k) slot_of(L.offsets[k][0], L.offsets[k][1]) = int(k);

    Vec m1c{0, 0}, tail_m1{0, 0};
    auto add_central = [&](const Vec& h, double m) {
        m1c = m1c + m * h;
        for (int k = 0; k < d; ++k) st.a[k] += 0.5 * m * h[k] * h[k];
    };
    auto add_tail = [&](const Vec& h, double m) {
        st.tail += m;
        tail_m1 = tail_m1 + m * h;
    };

    if (K.density) {
        for (std::size_t k = 0; k < L.offsets.size(); ++k) {
            const Vec c{(L.offsets[k][0] - 0.5) * hx, d == 2 ? (L.offsets[k][1] - 0.5) * hx : 0.0};
            double m = 0;
            cell_quadrature(d, c, hx, sub, [&](const Vec& h, double v) { m += kernel_at(K, h) * v; });
            st.w[k] = m;
        }
        for (int o = 0; o < kOctaves; ++o)
            shell_quadrature(d, std::ldexp(hx / 2, -o), sub,
                             [&](const Vec& h, double v) { add_central(h, kernel_at(K, h) * v); });
        const double W = (L.nw + 0.5) * hx;
        for (int o = 0; o < kOctaves; ++o)
            shell_quadrature(d, std::ldexp(2 * W, o), std::max(sub / 2, 4),
                             [&](const Vec& h, double v) { add_tail(h, kernel_at(K, h) * v); });
    }
    for (const auto& line : K.lines) {
        auto deposit = [&](double s, double ds) {
            const double m = line.radial_density(s) * ds;
            if (!std::isfinite(m) || m < 0) throw KernelEvalError("line density is not finite and nonnegative");
            const Vec h = s * line.direction;
            if (std::max(std::abs(h[0]), std::abs(h[1])) > (L.nw + 1) * hx) {
                add_tail(h, m);
                return;
            }
            const int a = int(std::lround(h[0] / hx)), b = d == 2 ? int(std::lround(h[1] / hx)) : 0;
            if (a == 0 && b == 0) {
                add_central(h, m);
            } else if (std::abs(a) <= L.nw && std::abs(b) <= L.nw && slot_of(a, b) >= 0) {
                st.w[slot_of(a, b)] += m;
            } else {
                add_tail(h, m);
            }
        };
        const double S = (L.nw + 0.5) * hx * std::sqrt(double(d));
        for (int sg : {-1, 1}) {
            for (int o = 0; o < kOctaves; ++o) {
                const double hi = std::ldexp(hx / 2, -o), lo = hi / 2, e = (hi - lo) / sub;
                for (int i = 0; i < sub; ++i) deposit(sg * (lo + (i + 0.5) * e), e);
            }
            const int nsteps = int(std::ceil((S - hx / 2) / (hx / sub)));
            const double e = (S - hx / 2) / nsteps;
            for (int i = 0; i < nsteps; ++i) deposit(sg * (hx / 2 + (i + 0.5) * e), e);
            for (int o = 0; o < kOctaves; ++o) {
                const double lo = std::ldexp(S, o), e2 = lo / sub;
                for (int i = 0; i < sub; ++i) deposit(sg * (lo + (i + 0.5) * e2), e2);
            }
        }
    }

    // First-order term left over after the compensation in the difference.
    Vec lattice_m1{0, 0}, unit_m1{0, 0};
    for (std::size_t k = 0; k < L.offsets.size(); ++k) {
        const Vec h{L.offsets[k][0] * hx, d == 2 ? L.offsets[k][1] * hx : 0.0};
        lattice_m1 = lattice_m1 + st.w[k] * h;
        if (norm(h) < 1) unit_m1 = unit_m1 + st.w[k] * h;
    }
    switch (kind) {
        case Regime::sub: st.drift = m1c; break;
        case Regime::critical: st.drift = -unit_m1; break;
        case Regime::super: st.drift = -(lattice_m1 + tail_m1); break;
    }
    return st;
}

// Lattice rings of offsets with r <= |h| < 2r, r = 2^k hx, as Ring objects for the ring problem.
struct LatticeRing {
    Ring ring;
    std::vector<Offset> offsets;
};

std::vector<LatticeRing> lattice_rings(const Lattice& L, double reach) {
    std::vector<LatticeRing> out;
    const double hx = L.hx, vol = L.d == 1 ? hx : hx * hx;
    for (int k = 0;; ++k) {
        const double r = std::ldexp(hx, k);
        LatticeRing lr;
        lr.ring.d = L.d;
        lr.ring.r = r;
        const int m = int(std::ceil(2 * r / hx));
        for (int b = (L.d == 2 ? -m : 0); b <= (L.d == 2 ? m : 0); ++b)
            for (int a = -m; a <= m; ++a) {
                const double rho = hx * std::hypot(double(a), double(b));
                if (rho >= r * (1 - 1e-12) && rho < 2 * r * (1 - 1e-12)) {
                    lr.offsets.push_back({a, b});
                    lr.ring.cells.push_back({Vec{a * hx, b * hx}, vol});
                }
            }
        const std::size_t nc = lr.offsets.size();
        lr.ring.antipode.assign(nc, -1);
        for (std::size_t i = 0; i < nc; ++i)
            for (std::size_t j = 0; j < nc; ++j)
                if (lr.offsets[j][0] == -lr.offsets[i][0] && lr.offsets[j][1] == -lr.offsets[i][1]) {
                    lr.ring.antipode[i] = int(j);
                    break;
                }
        lr.ring.volume = double(nc) * vol;
        lr.ring.n_rad = m;
        out.push_back(std::move(lr));
        if (2 * r >= reach) break;
    }
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------------------------

void ParabolicProblem::validate() const {
    initial.validate();
    if (!(t1 > t0)) throw ParameterError("t1 must exceed t0");
    if (!(active_radius > 0)) throw ParameterError("active radius must be positive");
    if (active_radius + 2 * initial.hx() > initial.R())
        throw ParameterError("the box must extend at least two cells beyond the active ball");
    if (subcells < 1) throw ParameterError("subcells must be positive");
    const double a = params.alpha;
    if (!(a > 0 && a < 2)) throw ParameterError("alpha must lie in (0,2)");
    if (a < 1 && (drift || drift_C0 != 0)) throw ParameterError("drift is not allowed when alpha < 1");
    if (drift_C0 < 0) throw ParameterError("C0 must be nonnegative");
    if (drift_sign != 1 && drift_sign != -1) throw ParameterError("drift sign must be +1 or -1");
    switch (op) {
        case OperatorKind::linear:
            kernel.validate();
            if (kernel.d != initial.d()) throw ParameterError("kernel and grid dimensions differ");
            if (drift_C0 != 0) throw ParameterError("C0 ball drift needs an extremal operator");
            break;
        case OperatorKind::kernel_field:
            if (!kernel_field) throw ParameterError("kernel field is empty");
            if (drift_C0 != 0) throw ParameterError("C0 ball drift needs an extremal operator");
            break;
        case OperatorKind::isaacs:
            if (isaacs.empty() || std::any_of(isaacs.begin(), isaacs.end(), [](const auto& r) { return r.empty(); }))
                throw ParameterError("Isaacs family needs nonempty rows");
            for (const auto& row : isaacs)
                for (const auto& K : row) {
                    K.validate();
                    if (K.d != initial.d()) throw ParameterError("kernel and grid dimensions differ");
                }
            if (drift_C0 != 0) throw ParameterError("C0 ball drift needs an extremal operator");
            break;
        case OperatorKind::extremal_minus:
        case OperatorKind::extremal_plus:
            params.validate();
            break;
    }
}

struct Stepper::Impl {
    ParabolicProblem prob;
    Lattice L;
    std::vector<LinStencil> stencils;  // one, one per active node, or the Isaacs family (flattened)
    std::vector<std::size_t> row_end;  // Isaacs row boundaries in `stencils`
    std::vector<Vec> b;                // drift per active node
    std::vector<LatticeRing> rings;    // extremal stepping
    double A_lo = 0, A_hi = 0;         // inner Pucci coefficients
    double tail_floor = 0, tail_budget = 0, tail_r = 0;
    double max_weight = 0;

    double far_reference(const GridFunction& u, const Vec& x) const {
        if (u.far_mode() == FarFieldMode::constant) return u.far_constant();
        const double s = 2 * (L.nw + 1) * L.hx;
        double acc = 0;
        for (int k = 0; k < L.d; ++k) {
            Vec e{0, 0};
            e[k] = s;
            acc += u(x + e) + u(x - e);
        }
        return acc / (2 * L.d);
    }

    double value(const GridFunction& u, int i, int j) const {
        if (L.inside(i, j)) return u[L.index(i, j)];
        if (u.far_mode() == FarFieldMode::constant) return u.far_constant();
        return u(L.pos(i, j));
    }

    double linear_apply(const LinStencil& st, const GridFunction& u, int i, int j, double v0, const Vec& x) const {
        double acc = 0;
        for (std::size_t k = 0; k < L.offsets.size(); ++k) {
            const double w = st.w[k];
            if (w == 0) continue;
            acc += w * (value(u, i + L.offsets[k][0], j + L.offsets[k][1]) - v0);
        }
        acc += st.tail * (far_reference(u, x) - v0);
        for (int k = 0; k < L.d; ++k) {
            const int di = k == 0 ? 1 : 0, dj = k == 1 ? 1 : 0;
            const double up = value(u, i + di, j + dj), dn = value(u, i - di, j - dj);
            acc += st.a[k] * (up + dn - 2 * v0) / (L.hx * L.hx);
        }
        return acc;
    }

    double upwind(const Vec& D, const GridFunction& u, int i, int j, double v0) const {
        double acc = 0;
        for (int k = 0; k < L.d; ++k) {
            const int di = k == 0 ? 1 : 0, dj = k == 1 ? 1 : 0;
            if (D[k] > 0) acc += D[k] * (value(u, i + di, j + dj) - v0) / L.hx;
            if (D[k] < 0) acc += -D[k] * (value(u, i - di, j - dj) - v0) / L.hx;
        }
        return acc;
    }

    double godunov(const GridFunction& u, int i, int j, double v0, int sign) const {
        double s = 0;
        for (int k = 0; k < L.d; ++k) {
            const int di = k == 0 ? 1 : 0, dj = k == 1 ? 1 : 0;
            const double dm = (v0 - value(u, i - di, j - dj)) / L.hx;
            const double dp = (value(u, i + di, j + dj) - v0) / L.hx;
            if (sign > 0)
                s += std::pow(std::max(dm, 0.0), 2) + std::pow(std::min(dp, 0.0), 2);
            else
                s += std::pow(std::min(dm, 0.0), 2) + std::pow(std::max(dp, 0.0), 2);
        }
        return std::sqrt(s);
    }

    double extremal_apply(const GridFunction& u, int i, int j, double v0, const Vec& x, Sign sign) const {
        const ClassParams& p = prob.params;
        double acc = 0;
        for (const auto& lr : rings) {
            std::vector<double> delta(lr.offsets.size());
            for (std::size_t c = 0; c < lr.offsets.size(); ++c)
                delta[c] = value(u, i + lr.offsets[c][0], j + lr.offsets[c][1]) - v0;
            const AnnulusProblem ap = AnnulusProblem::build(lr.ring, p, std::move(delta));
            acc += solve_annulus(ap, sign, ExtremalMode::symmetric).value;
        }
        for (int k = 0; k < L.d; ++k) {
            const int di = k == 0 ? 1 : 0, dj = k == 1 ? 1 : 0;
            const double s2 = (value(u, i + di, j + dj) + value(u, i - di, j - dj) - 2 * v0) / (L.hx * L.hx);
            const bool low = (s2 >= 0) == (sign == Sign::minus);
            acc += (low ? A_lo : A_hi) * s2;
        }
        const double fd = far_reference(u, x) - v0;
        const bool low = (fd >= 0) == (sign == Sign::minus);
        acc += (low ? tail_floor : tail_budget) * fd;
        return acc;
    }
};

Stepper::Stepper(const ParabolicProblem& prob) : impl_(std::make_unique<Impl>()) {
    prob.validate();
    Impl& m = *impl_;
    m.prob = prob;
    Lattice& L = m.L;
    const GridFunction& g = prob.initial;
    L.d = g.d();
    L.n = g.n();
    L.R = g.R();
    L.hx = g.hx();
    L.nw = int(std::ceil((L.R + prob.active_radius) / L.hx)) + 1;
    for (std::size_t idx = 0; idx < g.size(); ++idx)
        if (norm(g.node(idx)) < prob.active_radius) L.active.push_back(idx);
    const double alpha = prob.params.alpha;

    const bool extremal = prob.op == OperatorKind::extremal_minus || prob.op == OperatorKind::extremal_plus;
    if (!extremal) {
        for (int b = (L.d == 2 ? -L.nw : 0); b <= (L.d == 2 ? L.nw : 0); ++b)
            for (int a = -L.nw; a <= L.nw; ++a)
                if (a != 0 || b != 0) L.offsets.push_back({a, b});
    }

    m.b.assign(L.active.size(), Vec{0, 0});
    if (prob.drift)
        for (std::size_t k = 0; k < L.active.size(); ++k) m.b[k] = prob.drift(g.node(L.active[k]));
    const double ball = prob.drift_C0 * std::sqrt(double(L.d)) / L.hx;

    auto drift_weight = [&](const Vec& D) {
        double s = 0;
        for (int k = 0; k < L.d; ++k) s += std::abs(D[k]) / L.hx;
        return s;
    };

    switch (prob.op) {
        case OperatorKind::linear: {
            m.stencils.push_back(build_stencil(prob.kernel, alpha, L, prob.subcells));
            for (std::size_t k = 0; k < L.active.size(); ++k) {
                LinStencil s = m.stencils[0];
                s.drift = s.drift - m.b[k];
                m.max_weight = std::max(m.max_weight, s.total(L.hx, L.d));
            }
            break;
        }
        case OperatorKind::kernel_field: {
            m.stencils.resize(L.active.size());
            parallel_for(L.active.size(), [&](std::size_t k) {
                const KernelSpec K = prob.kernel_field(g.node(L.active[k]));
                K.validate();
                m.stencils[k] = build_stencil(K, alpha, L, prob.subcells);
            });
            for (std::size_t k = 0; k < L.active.size(); ++k) {
                LinStencil s = m.stencils[k];
                s.drift = s.drift - m.b[k];
                m.max_weight = std::max(m.max_weight, s.total(L.hx, L.d));
            }
            break;
        }
        case OperatorKind::isaacs: {
            for (const auto& row : prob.isaacs) {
                for (const auto& K : row) m.stencils.push_back(build_stencil(K, alpha, L, prob.subcells));
                m.row_end.push_back(m.stencils.size());
            }
            for (std::size_t k = 0; k < L.active.size(); ++k)
                for (const auto& st : m.stencils) {
                    LinStencil s = st;
                    s.drift = s.drift - m.b[k];
                    m.max_weight = std::max(m.max_weight, s.total(L.hx, L.d));
                }
            break;
        }
        case OperatorKind::extremal_minus:
        case OperatorKind::extremal_plus: {
            const ClassParams& p = prob.params;
            m.rings = lattice_rings(L, L.R + prob.active_radius);
            m.tail_r = 2 * m.rings.back().ring.r;
            const double q = std::exp2(-(2 - alpha)), geo = q / (1 - q);
            m.A_hi = 2 * (2 - alpha) * p.Lambda * std::pow(L.hx, 2 - alpha) * geo;
            m.A_lo = L.d == 1 ? p.mu * (2 - alpha) * p.lambda * std::pow(L.hx, 2 - alpha) * geo : 0.0;
            const double tail_sum = std::pow(m.tail_r, -alpha) / (1 - std::exp2(-alpha));
            m.tail_budget = (2 - alpha) * p.Lambda * tail_sum;
            m.tail_floor = p.mu * (2 - alpha) * p.lambda * ring_volume(L.d, 1.0) * tail_sum;
            double w = m.tail_budget + 2 * L.d * m.A_hi / (L.hx * L.hx);
            for (const auto& lr : m.rings) w += p.budget(lr.ring.r);
            for (std::size_t k = 0; k < L.active.size(); ++k)
                m.max_weight = std::max(m.max_weight, w + drift_weight(m.b[k]) + ball);
            break;
        }
    }
    if (!(m.max_weight > 0) || !std::isfinite(m.max_weight)) throw ParameterError("operator weight is not positive and finite");
}

Stepper::~Stepper() = default;

double Stepper::max_weight() const { return impl_->max_weight; }
double Stepper::cfl_dt() const { return 0.9 / impl_->max_weight; }

GridFunction Stepper::step(const GridFunction& u, double t, double dt) const {
    const Impl& m = *impl_;
    const Lattice& L = m.L;
    if (u.d() != L.d || u.n() != L.n || u.hx() != L.hx || u.R() != L.R)
        throw ArgumentError("grid function does not match the problem grid");
    if (!(dt > 0)) throw StepError("time step must be positive");
    if (dt * m.max_weight > 1 + 1e-12)
        throw StepError("CFL violated: dt * weight = " + std::to_string(dt * m.max_weight) + " > 1");
    GridFunction out = u;
    const ParabolicProblem& P = m.prob;
    parallel_for(L.active.size(), [&](std::size_t k) {
        const std::size_t idx = L.active[k];
        const auto [i, j] = L.ij(idx);
        const Vec x = u.node(idx);
        const double v0 = u[idx];
        double rhs = 0;
        switch (P.op) {
            case OperatorKind::linear:
                rhs = m.linear_apply(m.stencils[0], u, i, j, v0, x) + m.upwind(m.stencils[0].drift - m.b[k], u, i, j, v0);
                break;
            case OperatorKind::kernel_field:
                rhs = m.linear_apply(m.stencils[k], u, i, j, v0, x) + m.upwind(m.stencils[k].drift - m.b[k], u, i, j, v0);
                break;
            case OperatorKind::isaacs: {
                double best = kInf;
                std::size_t start = 0;
                for (std::size_t end : m.row_end) {
                    double sup = -kInf;
                    for (std::size_t s = start; s < end; ++s) {
                        const LinStencil& st = m.stencils[s];
                        sup = std::max(sup, m.linear_apply(st, u, i, j, v0, x) + m.upwind(st.drift, u, i, j, v0));
                    }
                    best = std::min(best, sup);
                    start = end;
                }
                rhs = best + m.upwind(-m.b[k], u, i, j, v0);
                break;
            }
            case OperatorKind::extremal_minus:
            case OperatorKind::extremal_plus: {
                const Sign s = P.op == OperatorKind::extremal_minus ? Sign::minus : Sign::plus;
                rhs = m.extremal_apply(u, i, j, v0, x, s) + m.upwind(-m.b[k], u, i, j, v0);
                if (P.drift_C0 > 0) rhs -= P.drift_sign * P.drift_C0 * m.godunov(u, i, j, v0, P.drift_sign);
                break;
            }
        }
        if (P.forcing) rhs += P.forcing(x, t);
        out[idx] = v0 + dt * rhs;
    });
    for (std::size_t idx : L.active)
        if (!std::isfinite(out[idx])) throw StepError("non-finite value after a step");
    return out;
}

GridFunction step(const ParabolicProblem& prob, const GridFunction& u, double t, double dt) {
    return Stepper(prob).step(u, t, dt);
}

Trajectory solve(const ParabolicProblem& prob) {
    const Stepper st(prob);
    Trajectory tr;
    tr.dt = st.cfl_dt();
    tr.cfl_ratio = tr.dt * st.max_weight();
    std::vector<double> rec = prob.record_times;
    std::sort(rec.begin(), rec.end());
    rec.erase(std::remove_if(rec.begin(), rec.end(), [&](double t) { return t <= prob.t0 || t > prob.t1; }),
              rec.end());
    const bool every = prob.record_times.empty();
    if (!every && (rec.empty() || rec.back() < prob.t1)) rec.push_back(prob.t1);

    GridFunction u = prob.initial;
    double t = prob.t0;
    tr.times.push_back(t);
    tr.frames.push_back(u);
    std::size_t next = 0;
    const double eps = 1e-12 * std::max(1.0, std::abs(prob.t1 - prob.t0));
    while (t < prob.t1 - eps) {
        const double target = every ? prob.t1 : rec[next];
        const double h = std::min(tr.dt, target - t);
        u = st.step(u, t, h);
        t = (target - (t + h) <= eps) ? target : t + h;
        if (every || t == target) {
            tr.times.push_back(t);
            tr.frames.push_back(u);
            if (!every) ++next;
        }
    }
    return tr;
}

// ---------------------------------------------------------------------------------------------
// Trajectory I/O

namespace {
constexpr char kMagic[8] = {'N', 'L', 'R', 'T', 'R', 'A', 'J', '1'};

template <class T>
void put(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <class T>
T get(std::istream& is) {
    T v{};
    if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw DataError("truncated trajectory file");
    return v;
}
}  // namespace

void Trajectory::write_binary(std::ostream& os) const {
    if (frames.empty()) throw ArgumentError("empty trajectory");
    const GridFunction& f0 = frames.front();
    os.write(kMagic, sizeof kMagic);
    put<std::int32_t>(os, f0.d());
    put<double>(os, f0.R());
    put<double>(os, f0.hx());
    put<std::uint8_t>(os, f0.far_mode() == FarFieldMode::constant ? 0 : 1);
    put<double>(os, f0.far_constant());
    put<std::uint64_t>(os, frames.size());
    put<double>(os, dt);
    put<double>(os, cfl_ratio);
    for (double t : times) put<double>(os, t);
    for (const auto& f : frames) os.write(reinterpret_cast<const char*>(f.values().data()), std::streamsize(f.size() * sizeof(double)));
    if (!os) throw DataError("failed to write trajectory");
}

Trajectory Trajectory::read_binary(std::istream& is) {
    char magic[8];
    if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0)
        throw DataError("not a trajectory file");
    Trajectory tr;
    const int d = get<std::int32_t>(is);
    const double R = get<double>(is), hx = get<double>(is);
    const auto mode = get<std::uint8_t>(is);
    const double c = get<double>(is);
    const auto n = get<std::uint64_t>(is);
    tr.dt = get<double>(is);
    tr.cfl_ratio = get<double>(is);
    if (n > (1u << 24)) throw DataError("implausible frame count");
    for (std::uint64_t k = 0; k < n; ++k) tr.times.push_back(get<double>(is));
    for (std::uint64_t k = 0; k < n; ++k) {
        GridFunction g(d, R, hx);
        if (mode == 0)
            g.set_far_constant(c);
        else
            g.set_far_clamp();
        if (!is.read(reinterpret_cast<char*>(g.values().data()), std::streamsize(g.size() * sizeof(double))))
            throw DataError("truncated trajectory file");
        g.validate();
        tr.frames.push_back(std::move(g));
    }
    return tr;
}

// ---------------------------------------------------------------------------------------------
// Diagnostics

InfConvolution inf_convolution_q(const GridFunction& u, double coeff) {
    if (!(coeff > 0)) throw ArgumentError("inf-convolution coefficient must be positive");
    std::vector<std::size_t> cand;
    for (std::size_t i = 0; i < u.size(); ++i)
        if (norm(u.node(i)) <= 1 + 1e-12) cand.push_back(i);
    if (cand.empty()) throw DomainError("no grid nodes in the closed unit ball");
    std::stable_sort(cand.begin(), cand.end(), [&](std::size_t a, std::size_t b) {
        const Vec pa = u.node(a), pb = u.node(b);
        return pa[0] < pb[0] || (pa[0] == pb[0] && pa[1] < pb[1]);
    });
    InfConvolution out{u, std::vector<std::size_t>(u.size())};
    parallel_for(u.size(), [&](std::size_t i) {
        const Vec x = u.node(i);
        double best = kInf;
        std::size_t arg = cand.front();
        for (std::size_t c : cand) {
            const Vec y = u.node(c);
            const Vec dxy = x - y;
            const double v = u[c] + coeff * dot(dxy, dxy);
            if (v < best) {
                best = v;
                arg = c;
            }
        }
        out.q[i] = best;
        out.argmin[i] = arg;
    });
    return out;
}

std::vector<double> time_weights(const std::vector<double>& times, double lo, double hi) {
    const std::size_t n = times.size();
    std::vector<double> w(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        const double a = k == 0 ? -kInf : 0.5 * (times[k - 1] + times[k]);
        const double b = k + 1 == n ? kInf : 0.5 * (times[k] + times[k + 1]);
        w[k] = std::max(0.0, std::min(b, hi) - std::max(a, lo));
    }
    return w;
}

namespace {

void check_time_range(const Trajectory& tr, double lo, double hi) {
    if (tr.frames.empty()) throw ArgumentError("empty trajectory");
    const double tol = 1e-9 * std::max(1.0, std::abs(tr.times.back() - tr.times.front()));
    if (lo < tr.times.front() - tol || hi > tr.times.back() + tol)
        throw DomainError("time window lies outside the recorded trajectory");
}

void check_ball(const GridFunction& g, const Vec& x, double r) {
    for (int k = 0; k < g.d(); ++k)
        if (std::abs(x[k]) + r > g.R() + 1e-12) throw DomainError("ball leaves the recorded box");
}

double cell_vol(const GridFunction& g) { return std::pow(g.hx(), g.d()); }

}  // namespace

double growth_lemma_measure(const Trajectory& tr, double A, const Cylinder& Q) {
    Q.validate();
    const double ra = std::pow(Q.r, Q.alpha);
    check_time_range(tr, Q.t - ra, Q.t);
    const GridFunction& g0 = tr.frames.front();
    check_ball(g0, Q.x, Q.r);
    const auto tw = time_weights(tr.times, Q.t - ra, Q.t);
    double hit = 0, tot = 0;
    for (std::size_t k = 0; k < tr.frames.size(); ++k) {
        if (tw[k] == 0) continue;
        const GridFunction& f = tr.frames[k];
        for (std::size_t i = 0; i < f.size(); ++i) {
            if (!(norm(f.node(i) - Q.x) < Q.r)) continue;
            tot += tw[k];
            if (f[i] <= A) hit += tw[k];
        }
    }
    if (tot == 0) throw DomainError("cylinder contains no grid cells");
    return hit / tot;
}

double qt_measure_diagnostic(const Trajectory& tr, double A1, double tau_prime, double coeff) {
    if (tr.frames.size() < 2) throw ArgumentError("need at least two recorded times");
    if (!(tau_prime > 0)) throw ArgumentError("tau' must be positive");
    check_time_range(tr, -tau_prime, 0.0);
    const auto tw = time_weights(tr.times, -tau_prime, 0.0);
    std::vector<GridFunction> q;
    q.reserve(tr.frames.size());
    for (const auto& f : tr.frames) q.push_back(inf_convolution_q(f, coeff).q);
    double hit = 0, tot = 0;
    const std::size_t n = tr.frames.size();
    for (std::size_t k = 0; k < n; ++k) {
        if (tw[k] == 0) continue;
        const std::size_t a = k + 1 < n ? k : k - 1, b = a + 1;
        const double dt = tr.times[b] - tr.times[a];
        for (std::size_t i = 0; i < q[k].size(); ++i) {
            if (!(norm(q[k].node(i)) < 0.125)) continue;
            const double qt = (q[b][i] - q[a][i]) / dt;
            tot += tw[k];
            if (qt <= A1) hit += tw[k];
        }
    }
    if (tot == 0) throw DomainError("no cells in B_1/8 x (-tau', 0]");
    return hit / tot;
}

double l_eps_norm(const Trajectory& tr, double eps, const LEpsRegion& region) {
    if (!(eps > 0)) throw ArgumentError("eps must be positive");
    check_time_range(tr, region.t_lo, region.t_hi);
    check_ball(tr.frames.front(), region.x, region.radius);
    const auto tw = time_weights(tr.times, region.t_lo, region.t_hi);
    double s = 0;
    for (std::size_t k = 0; k < tr.frames.size(); ++k) {
        if (tw[k] == 0) continue;
        const GridFunction& f = tr.frames[k];
        const double v = cell_vol(f) * tw[k];
        for (std::size_t i = 0; i < f.size(); ++i) {
            if (!(norm(f.node(i) - region.x) < region.radius)) continue;
            if (f[i] < -1e-12) throw DataError("negative value in the L^eps region");
            s += std::pow(std::max(f[i], 0.0), eps) * v;
        }
    }
    return std::pow(s, 1 / eps);
}

WeakHarnackValue weak_harnack_ratio(const Trajectory& tr, double eps, double alpha, double C) {
    WeakHarnackValue out;
    out.norm = l_eps_norm(tr, eps, {{0, 0}, 0.25, -1.0, -std::exp2(-alpha)});
    const double lo = -std::pow(0.25, alpha);
    check_time_range(tr, lo, 0.0);
    out.inf = kInf;
    for (std::size_t k = 0; k < tr.frames.size(); ++k) {
        if (!(tr.times[k] > lo && tr.times[k] <= 0)) continue;
        const GridFunction& f = tr.frames[k];
        for (std::size_t i = 0; i < f.size(); ++i)
            if (norm(f.node(i)) < 0.25) out.inf = std::min(out.inf, f[i]);
    }
    if (out.inf == kInf) throw DomainError("no recorded frames in Q_1/4");
    const double den = out.inf + C;
    out.ratio = den > 0 ? out.norm / den : kInf;
    return out;
}

OscProfile osc_and_fit(const Trajectory& tr, const SpaceTimePoint& base, const std::vector<double>& radii,
                       double alpha) {
    if (radii.empty()) throw ArgumentError("no radii");
    OscProfile p;
    p.radii = radii;
    for (double r : radii) {
        if (!(r > 0)) throw ArgumentError("radii must be positive");
        check_time_range(tr, base.t - std::pow(r, alpha), base.t);
        check_ball(tr.frames.front(), base.x, r);
        double lo = kInf, hi = -kInf;
        for (std::size_t k = 0; k < tr.frames.size(); ++k) {
            const double t = tr.times[k];
            if (!(t > base.t - std::pow(r, alpha) && t <= base.t + 1e-12)) continue;
            const GridFunction& f = tr.frames[k];
            for (std::size_t i = 0; i < f.size(); ++i)
                if (norm(f.node(i) - base.x) <= r + 1e-12) {
                    lo = std::min(lo, f[i]);
                    hi = std::max(hi, f[i]);
                }
        }
        if (lo == kInf) throw DomainError("cylinder contains no recorded samples");
        p.osc.push_back(hi - lo);
    }
    std::vector<double> X, Y;
    for (std::size_t k = 0; k < radii.size(); ++k)
        if (p.osc[k] > 0) {
            X.push_back(std::log(radii[k]));
            Y.push_back(std::log(p.osc[k]));
        }
    if (X.empty()) {
        p.zero_osc = true;
        p.gamma = kInf;
        return p;
    }
    if (X.size() == 1) {
        p.gamma = 0;
        p.log_constant = Y[0];
        return p;
    }
    double mx = 0, my = 0;
    for (std::size_t k = 0; k < X.size(); ++k) {
        mx += X[k];
        my += Y[k];
    }
    mx /= double(X.size());
    my /= double(X.size());
    double sxx = 0, sxy = 0;
    for (std::size_t k = 0; k < X.size(); ++k) {
        sxx += (X[k] - mx) * (X[k] - mx);
        sxy += (X[k] - mx) * (Y[k] - my);
    }
    p.gamma = sxx > 0 ? sxy / sxx : 0;
    p.log_constant = my - p.gamma * mx;
    double ss = 0;
    for (std::size_t k = 0; k < X.size(); ++k) {
        const double e = Y[k] - (p.log_constant + p.gamma * X[k]);
        ss += e * e;
    }
    p.residual = std::sqrt(ss / double(X.size()));
    return p;
}

RegularityRun regularity_run(const RegularityOptions& opt, std::uint64_t seed) {
    const double alpha = opt.params.alpha;
    ParabolicProblem pr;
    pr.params = opt.params;
    pr.kernel = make_random_admissible(opt.params, seed, 1);
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
    std::uniform_real_distribution<double> U(0, 1);
    const double floor_value = U(rng);
    std::vector<std::array<double, 3>> bumps;  // centre, height, width
    for (int k = 0; k < opt.bumps; ++k) bumps.push_back({2 * U(rng) - 1, opt.max_height * U(rng), 0.05 + 0.3 * U(rng)});
    pr.initial = GridFunction::sample(1, opt.R, opt.hx, [&](const Vec& x) {
        double v = floor_value;
        for (const auto& b : bumps) v += b[1] * std::exp(-std::pow((x[0] - b[0]) / b[2], 2));
        return v;
    });
    pr.initial.set_far_constant(floor_value);
    pr.t0 = opt.t0;
    pr.t1 = 0;
    Trajectory tr = solve(pr);

    RegularityRun out;
    out.seed = seed;
    out.steps = tr.times.size() - 1;
    const WeakHarnackValue raw = weak_harnack_ratio(tr, opt.eps, alpha, opt.C);
    out.harnack = raw;
    if (!(raw.inf > 0)) throw DataError("solution vanishes on Q_1/4");
    Trajectory scaled = tr;
    for (auto& f : scaled.frames)
        for (double& v : f.values()) v /= raw.inf;
    out.growth_fraction = growth_lemma_measure(scaled, opt.A, Cylinder{1, {0, 0}, 0.0, 1.0, alpha});
    // Base point on the node nearest the origin.
    const Vec base{-opt.R + (std::floor(opt.R / opt.hx) + 0.5) * opt.hx, 0};
    out.holder = osc_and_fit(tr, {base, 0.0}, opt.radii, alpha);
    return out;
}

}  // namespace nlreg
