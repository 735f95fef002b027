#include "nlreg/barrier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include <boost/numeric/odeint.hpp>

#include "nlreg/errors.hpp"
#include "nlreg/parallel.hpp"

namespace nlreg {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

std::string point_str(const Vec& x, int d) {
    return d == 1 ? "x=" + fmt(x[0]) : "x=(" + fmt(x[0]) + "," + fmt(x[1]) + ")";
}

EvalOptions quiet_eval() {
    EvalOptions o;
    o.tol = 0;
    o.keep_certificate = false;
    return o;
}

double minus_general(const ClassParams& p, const Field& u, const Vec& x, const AnnulusGrid& grid) {
    return eval_extremal(p, u, x, Sign::minus, ExtremalMode::general, grid, quiet_eval()).value;
}

// Class parameters at a different order; C0 is irrelevant for M^- and must vanish below 1.
ClassParams at_order(const ClassParams& p, double alpha) {
    ClassParams q = p;
    q.alpha = alpha;
    q.alpha0 = std::min(p.alpha0, alpha);
    if (alpha < 1) q.C0 = 0;
    return q;
}

Mat radial_hessian(const RadialValue& rv, const Vec& y, int d) {
    const double rho = norm(y);
    if (rho == 0) return {rv.d2, 0, 0, d == 2 ? rv.d2 : 0};
    const Vec e = (1 / rho) * y;
    if (d == 1) return {rv.d2, 0, 0, 0};
    const double t = rv.d1 / rho;
    return {rv.d2 * e[0] * e[0] + t * (1 - e[0] * e[0]), (rv.d2 - t) * e[0] * e[1], (rv.d2 - t) * e[0] * e[1],
            rv.d2 * e[1] * e[1] + t * (1 - e[1] * e[1])};
}

}  // namespace

// ---------------------------------------------------------------------------------------------
// ODE profile

OdeProfile::OdeProfile(double C1, double alpha, std::vector<double> t, std::vector<double> f)
    : C1_(C1), alpha_(alpha), t_(std::move(t)), f_(std::move(f)) {
    const std::size_t n = t_.size();
    if (n < 2 || f_.size() != n) throw IntegrationError("profile needs at least two samples");
    std::vector<double> s(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) s[i] = (f_[i + 1] - f_[i]) / (t_[i + 1] - t_[i]);
    m_.assign(n, 0.0);
    m_[0] = s[0];
    m_[n - 1] = s[n - 2];
    for (std::size_t i = 1; i + 1 < n; ++i) m_[i] = s[i - 1] * s[i] <= 0 ? 0.0 : 0.5 * (s[i - 1] + s[i]);
    // Fritsch-Carlson limiter keeps the interpolant monotone.
    for (std::size_t i = 0; i + 1 < n; ++i) {
        if (s[i] == 0) {
            m_[i] = m_[i + 1] = 0;
            continue;
        }
        const double a = m_[i] / s[i], b = m_[i + 1] / s[i];
        const double h = a * a + b * b;
        if (h > 9) {
            const double tau = 3 / std::sqrt(h);
            m_[i] = tau * a * s[i];
            m_[i + 1] = tau * b * s[i];
        }
    }
}

double OdeProfile::operator()(double t) const {
    if (t_.empty()) throw IntegrationError("empty profile");
    if (t < t_.front() - 1e-12 * std::abs(t_.front()) || t > 0) throw DomainError("time outside the profile range");
    if (t >= 0) return 0.0;
    t = std::max(t, t_.front());
    const std::size_t i =
        std::min<std::size_t>(std::upper_bound(t_.begin(), t_.end(), t) - t_.begin(), t_.size() - 1) - 1;
    const double h = t_[i + 1] - t_[i], u = (t - t_[i]) / h;
    const double h00 = (1 + 2 * u) * (1 - u) * (1 - u), h10 = u * (1 - u) * (1 - u);
    const double h01 = u * u * (3 - 2 * u), h11 = u * u * (u - 1);
    return h00 * f_[i] + h10 * h * m_[i] + h01 * f_[i + 1] + h11 * h * m_[i + 1];
}

double OdeProfile::derivative(double t) const {
    const double f = (*this)(t);
    return -C1_ * (std::sqrt(f) + std::pow(f, 1 - alpha_ / 2));
}

OdeProfile solve_barrier_ode(double C1, double alpha, double T, int samples) {
    if (!(C1 > 0)) throw ArgumentError("C1 must be positive");
    if (!(T < 0)) throw ArgumentError("T must be negative");
    if (!(alpha > 0 && alpha <= 2)) throw ArgumentError("alpha must lie in (0,2]");
    if (samples < 8) throw ArgumentError("too few samples");

    // Near 0 the smaller exponent dominates: g' ~ c g^e in s = -t.
    const double e1 = 0.5, e2 = 1 - alpha / 2;
    const double e = std::min(e1, e2);
    const double c = C1 * ((e1 == e2) ? 2.0 : 1.0);
    const double s0 = 1e-6, S = -T;
    if (!(s0 < S)) throw ArgumentError("horizon shorter than the start-up step");
    const auto seed = [&](double s) { return std::pow((1 - e) * c * s, 1 / (1 - e)); };

    std::vector<double> times{s0};
    const int nlog = samples / 10;
    for (int k = 1; k <= nlog; ++k) times.push_back(s0 * std::pow(S / s0, double(k) / nlog));
    for (int k = 1; k < samples; ++k) times.push_back(S * double(k) / (samples - 1));
    std::sort(times.begin(), times.end());
    times.erase(std::unique(times.begin(), times.end(), [](double a, double b) { return b - a < 1e-15; }), times.end());
    times.erase(std::remove_if(times.begin(), times.end(), [&](double s) { return s < s0 || s > S; }), times.end());
    if (times.back() < S) times.push_back(S);

    using State = std::vector<double>;
    namespace ode = boost::numeric::odeint;
    auto rhs = [&](const State& g, State& dg, double) {
        const double v = std::max(g[0], 0.0);
        dg[0] = C1 * (std::sqrt(v) + std::pow(v, 1 - alpha / 2));
    };
    std::vector<double> out_s, out_g;
    auto obs = [&](const State& g, double s) {
        out_s.push_back(s);
        out_g.push_back(g[0]);
    };
    State g{seed(s0)};
    try {
        ode::integrate_times(ode::make_dense_output(1e-13, 1e-12, ode::runge_kutta_dopri5<State>()), rhs, g,
                             times.begin(), times.end(), s0 * 1e-2, obs);
    } catch (const std::exception& ex) {
        throw IntegrationError(std::string("ODE step failure: ") + ex.what());
    }
    if (out_s.size() != times.size()) throw IntegrationError("ODE integration stopped early");

    std::vector<double> t, f;
    t.reserve(out_s.size() + 1);
    for (std::size_t i = out_s.size(); i-- > 0;) {
        t.push_back(-out_s[i]);
        f.push_back(out_g[i]);
    }
    t.push_back(0.0);
    f.push_back(0.0);
    for (std::size_t i = 0; i + 1 < f.size(); ++i)
        if (!(f[i] > f[i + 1]) || !std::isfinite(f[i])) throw IntegrationError("profile is not strictly monotone");
    return OdeProfile(C1, alpha, std::move(t), std::move(f));
}

double truncated_parabola_C1(const ClassParams& p) {
    p.validate();
    const double a = p.alpha, L = p.Lambda;
    double odd = 0;
    if (a < 1) odd = dyadic_constants::first_moment_inner(a);
    if (a > 1) odd = dyadic_constants::first_moment_outer(a);
    const double drift = a >= 1 ? 16 * p.C0 : 0.0;
    return drift +
           (0.5 * dyadic_constants::second_moment_inner(a) + 2 * dyadic_constants::tail_mass(a)) * L *
               std::pow(128.0, a / 2) +
           16 * std::pow(128.0, (a - 1) / 2) * odd * L;
}

ParabolaReport truncated_parabola_check(const OdeProfile& prof, const ClassParams& p, const AnnulusGrid& grid,
                                        int n_t, int n_x) {
    p.validate();
    const int d = grid.d();
    struct Pt {
        Vec x;
        double t;
    };
    std::vector<Pt> pts;
    for (int i = 1; i <= n_t; ++i) {
        const double t = prof.T() * double(i) / n_t;
        const double rad = std::sqrt(prof(t)) / 8;
        for (int j = 0; j < n_x; ++j) {
            const double s = -1 + (2.0 * j + 1) / n_x;
            const double th = 0.61 * j;
            pts.push_back({d == 1 ? Vec{s * rad, 0} : Vec{s * rad * std::cos(th), s * rad * std::sin(th)}, t});
        }
    }
    std::vector<double> res(pts.size());
    const double C0 = p.alpha >= 1 ? p.C0 : 0.0;
    parallel_for(pts.size(), [&](std::size_t k) {
        const double t = pts[k].t, f = prof(t);
        Field phi;
        phi.d = d;
        phi.value = [f](const Vec& y) { return std::max(0.0, f - 64 * dot(y, y)); };
        phi.grad = [f](const Vec& y) { return f - 64 * dot(y, y) > 0 ? -128.0 * y : Vec{0, 0}; };
        phi.hess = [f, d](const Vec& y) {
            return f - 64 * dot(y, y) > 0 ? Mat{-128, 0, 0, d == 2 ? -128.0 : 0.0} : Mat{0, 0, 0, 0};
        };
        phi.far_value = 0.0;
        phi.far_radius = std::sqrt(f) / 8;
        phi.sup_bound = f;
        const Vec& x = pts[k].x;
        res[k] = prof.derivative(t) + C0 * 128 * norm(x) - minus_general(p, phi, x, grid);
    });
    ParabolaReport rep;
    rep.points = static_cast<int>(pts.size());
    rep.max_residual = -kInf;
    for (std::size_t k = 0; k < pts.size(); ++k)
        if (res[k] > rep.max_residual) {
            rep.max_residual = res[k];
            rep.worst_x = pts[k].x;
            rep.worst_t = pts[k].t;
        }
    return rep;
}

// ---------------------------------------------------------------------------------------------
// Bump

RadialValue bump_radial(const BumpSpec& s, double rho) {
    const double a = 1 - s.c1, b = 1 - s.c1 / 2, q = s.q;
    if (rho >= b) return {std::pow(rho, -q), -q * std::pow(rho, -q - 1), q * (q + 1) * std::pow(rho, -q - 2)};
    const double top = std::pow(s.gamma, -q);
    if (rho <= a) return {top, 0, 0};
    // Quintic Hermite: flat at the left end, C2 match with rho^-q at the right end.
    const double L = b - a, u = (rho - a) / L;
    const double p1 = std::pow(b, -q), v1 = -q * std::pow(b, -q - 1), a1 = q * (q + 1) * std::pow(b, -q - 2);
    const double u2 = u * u, u3 = u2 * u, u4 = u3 * u, u5 = u4 * u;
    const double H3 = 10 * u3 - 15 * u4 + 6 * u5, H3p = 30 * u2 - 60 * u3 + 30 * u4, H3pp = 60 * u - 180 * u2 + 120 * u3;
    const double H4 = -4 * u3 + 7 * u4 - 3 * u5, H4p = -12 * u2 + 28 * u3 - 15 * u4,
                 H4pp = -24 * u + 84 * u2 - 60 * u3;
    const double H5 = 0.5 * u3 - u4 + 0.5 * u5, H5p = 1.5 * u2 - 4 * u3 + 2.5 * u4, H5pp = 3 * u - 12 * u2 + 10 * u3;
    const double D = p1 - top;
    RadialValue r;
    r.v = top + D * H3 + L * v1 * H4 + L * L * a1 * H5;
    r.d1 = (D * H3p + L * v1 * H4p + L * L * a1 * H5p) / L;
    r.d2 = (D * H3pp + L * v1 * H4pp + L * L * a1 * H5pp) / (L * L);
    return r;
}

void BumpSpec::validate() const {
    if (!(c1 > 0 && c1 < 0.5)) throw SpecError("c1 must lie in (0,1/2)");
    if (!(gamma > 0 && gamma < 1 - c1)) throw SpecError("gamma must lie in (0,1-c1)");
    if (!(q >= 1)) throw SpecError("q must be >= 1");
    if (!std::isfinite(std::pow(gamma, -q))) throw SpecError("gamma^-q overflows");
    const double a = 1 - c1, b = 1 - c1 / 2;
    const int n = 2000;
    double prev = kInf;
    for (int i = 0; i <= n; ++i) {
        const double rho = a + (b - a) * i / n;
        const RadialValue rv = bump_radial(*this, rho);
        const double scale = std::pow(gamma, -q);
        if (rv.d1 > 1e-12 * scale || rv.v > prev + 1e-12 * scale)
            throw SpecError("bridge is not monotone at |y|=" + fmt(rho) + "; shrink c1");
        if (rv.v < std::min(std::pow(gamma, -q), std::pow(rho, -q)) * (1 - 1e-12))
            throw SpecError("bridge drops below min(gamma^-q,|y|^-q) at |y|=" + fmt(rho));
        prev = rv.v;
    }
}

double bump(const BumpSpec& s, const Vec& y) { return bump_radial(s, norm(y)).v; }

Vec bump_gradient(const BumpSpec& s, const Vec& y, int d) {
    const double rho = norm(y);
    if (rho == 0) return {0, 0};
    const RadialValue rv = bump_radial(s, rho);
    Vec g = (rv.d1 / rho) * y;
    if (d == 1) g[1] = 0;
    return g;
}

Mat bump_hessian(const BumpSpec& s, const Vec& y, int d) {
    return radial_hessian(bump_radial(s, norm(y)), y, d);
}

Field bump_field(const BumpSpec& s, int d, double cutoff) {
    Field f;
    f.d = d;
    f.value = [s, cutoff](const Vec& y) { return norm(y) < cutoff ? bump(s, y) : 0.0; };
    f.grad = [s, d, cutoff](const Vec& y) { return norm(y) < cutoff ? bump_gradient(s, y, d) : Vec{0, 0}; };
    f.hess = [s, d, cutoff](const Vec& y) { return norm(y) < cutoff ? bump_hessian(s, y, d) : Mat{0, 0, 0, 0}; };
    f.far_value = 0.0;
    f.far_radius = cutoff;
    f.sup_bound = std::pow(s.gamma, -s.q);
    return f;
}

// ---------------------------------------------------------------------------------------------
// Search

namespace {

// Worst-case measure of (floor set) cap S over admissible symmetric floor sets, as a
// fraction of the ring: the floor takes the pairs meeting S least.
double worst_floor_fraction(const Ring& R, double mu, const std::function<bool(const Vec&)>& in_set) {
    std::vector<double> pair_hits;
    int npair = 0;
    for (std::size_t c = 0; c < R.cells.size(); ++c) {
        const int a = R.antipode[c];
        if (a < static_cast<int>(c)) continue;
        ++npair;
        double m = 0;
        if (in_set(R.cells[c].h)) m += R.cells[c].vol;
        if (a != static_cast<int>(c) && in_set(R.cells[a].h)) m += R.cells[a].vol;
        pair_hits.push_back(m);
    }
    std::sort(pair_hits.begin(), pair_hits.end());
    const int F = std::min(npair, static_cast<int>(std::ceil(mu * npair - 1e-9)));
    double s = 0;
    for (int i = 0; i < F; ++i) s += pair_hits[i];
    return s / R.volume;
}

bool geometry_i(const Ring& R, const ClassParams& p, double c1, double* worst) {
    const int d = R.d;
    double w = kInf;
    const int nr = 24;
    for (int i = 0; i <= nr; ++i) {
        const double rho = 1 - c1 + c1 * (i + 0.5) / (nr + 1);
        const int nth = d == 1 ? 1 : 8;
        for (int j = 0; j < nth; ++j) {
            const double th = j * std::numbers::pi / (2 * nth);
            const Vec x = d == 1 ? Vec{rho, 0} : Vec{rho * std::cos(th), rho * std::sin(th)};
            const double fr =
                worst_floor_fraction(R, p.mu, [&](const Vec& h) { return norm(h + x) < 1 - c1; });
            w = std::min(w, fr);
        }
    }
    *worst = w;
    return w >= p.mu / 4;
}

bool geometry_ii(const Ring& R, const ClassParams& p, double c2, double* worst) {
    *worst = worst_floor_fraction(R, p.mu, [&](const Vec& h) { return h[0] * h[0] >= c2 * dot(h, h); });
    return *worst >= p.mu / 2;
}

}  // namespace

GeometryCertificate search_geometry(const ClassParams& p, const AnnulusGrid& grid, double r1) {
    p.validate();
    if (!(r1 > 0 && r1 < 0.5)) throw ArgumentError("r1 must lie in (0,1/2)");
    const Ring R = grid.ring(r1);
    GeometryCertificate g;
    g.r1 = r1;
    double c1 = 0.25;
    for (int k = 0;; ++k) {
        if (geometry_i(R, p, c1, &g.hit_fraction)) break;
        if (k == 20) throw SearchFailure("no c1 >= 2^-22 certifies the annulus intersection at r1=" + fmt(r1));
        c1 /= 2;
    }
    g.c1 = c1;
    double c2 = 0.5;
    for (int k = 0;; ++k) {
        if (geometry_ii(R, p, c2, &g.cone_fraction)) break;
        if (k == 20) throw SearchFailure("no c2 >= 2^-21 certifies the cone intersection");
        c2 /= 2;
    }
    g.c2 = c2;
    return g;
}

std::vector<Vec> shell_points(int d, double c1, int n) {
    if (n < 2) throw ArgumentError("need at least two shell samples");
    std::vector<Vec> pts;
    for (int i = 0; i < n; ++i) {
        const double rho = 1 - c1 / 2 + (c1 / 2) * double(i) / (n - 1);
        const double th = 0.37 * i;
        pts.push_back(d == 1 ? Vec{rho, 0} : Vec{rho * std::cos(th), rho * std::sin(th)});
    }
    return pts;
}

double extremal_minus_bump(const BumpSpec& s, const ClassParams& p, const Vec& x, const AnnulusGrid& grid) {
    return minus_general(p, bump_field(s, grid.d(), 4.0), x, grid);
}

namespace {

// Checks M^- b >= C q |x|^{-q-alpha} at every shell point and order; fills `pts`.
bool shell_holds(const BumpSpec& s, double C, const std::vector<ClassParams>& orders, const AnnulusGrid& grid,
                 int n, std::vector<ShellPoint>& pts) {
    const auto xs = shell_points(grid.d(), s.c1, n);
    pts.assign(xs.size() * orders.size(), {});
    parallel_for(pts.size(), [&](std::size_t k) {
        const ClassParams& p = orders[k / xs.size()];
        const Vec& x = xs[k % xs.size()];
        ShellPoint& sp = pts[k];
        sp.x = x;
        sp.alpha = p.alpha;
        sp.value = extremal_minus_bump(s, p, x, grid);
        sp.target = C * s.q * std::pow(norm(x), -s.q - p.alpha);
    });
    return std::all_of(pts.begin(), pts.end(), [](const ShellPoint& sp) { return sp.value >= sp.target; });
}

std::string worst_shell(const std::vector<ShellPoint>& pts, int d) {
    const ShellPoint* w = nullptr;
    for (const auto& sp : pts)
        if (!w || sp.value - sp.target < w->value - w->target) w = &sp;
    if (!w) return "";
    return " worst shell point " + point_str(w->x, d) + " alpha=" + fmt(w->alpha) + " M-b=" + fmt(w->value) +
           " target=" + fmt(w->target);
}

}  // namespace

BumpSearchResult search_bump_params(double C, const ClassParams& p, const AnnulusGrid& grid,
                                    const BumpSearchOptions& opt) {
    if (!(C > 0)) throw ArgumentError("shell margin C must be positive");
    p.validate();
    const int d = grid.d();
    const GeometryCertificate geo = search_geometry(p, grid, opt.r1);

    BumpSearchResult res;
    res.C = C;
    res.r1 = geo.r1;
    res.c2 = geo.c2;
    res.alpha_samples = opt.alpha_samples.empty() ? std::vector<double>{p.alpha} : opt.alpha_samples;
    std::vector<ClassParams> q_order{at_order(p, opt.alpha_q)};
    std::vector<ClassParams> orders;
    for (double a : res.alpha_samples) orders.push_back(at_order(p, a));
    for (const auto& o : orders) o.validate();
    q_order[0].validate();

    BumpSpec s;
    s.gamma = 0.25;
    s.c1 = geo.c1;
    std::vector<ShellPoint> pts;

    // Stage 1: q doubles at an order near 2 with gamma fixed at 1/4.
    bool found = false;
    for (int k = 0; k <= opt.q_max_log2 && !found; ++k) {
        s.q = std::ldexp(1.0, k);
        res.q_steps = k + 1;
        for (int shrink = 0;; ++shrink) {
            try {
                s.validate();
                break;
            } catch (const SpecError&) {
                if (shrink == 6) throw;
                s.c1 /= 2;
            }
        }
        found = shell_holds(s, C, q_order, grid, opt.shell_samples, pts);
    }
    if (!found)
        throw SearchFailure("q doubling exhausted at q=" + fmt(s.q) + " gamma=" + fmt(s.gamma) + " c1=" + fmt(s.c1) +
                            ";" + worst_shell(pts, d));

    // Stage 2: gamma halves until every sampled order passes.
    found = false;
    for (int k = 2; k <= opt.gamma_min_log2 && !found; ++k) {
        s.gamma = std::ldexp(1.0, -k);
        res.gamma_steps = k - 1;
        if (!std::isfinite(std::pow(s.gamma, -s.q))) break;
        s.validate();
        found = shell_holds(s, C, orders, grid, opt.shell_samples, pts);
    }
    if (!found)
        throw SearchFailure("gamma halving exhausted at gamma=" + fmt(s.gamma) + " q=" + fmt(s.q) + ";" +
                            worst_shell(pts, d));
    res.gamma1 = s.gamma;
    res.q1 = s.q;
    res.c1 = s.c1;
    res.shell = std::move(pts);
    return res;
}

OrderingReport gamma_ordering_check(const BumpSpec& s, double gamma_smaller, const ClassParams& p,
                                    const AnnulusGrid& grid, int shell_samples) {
    if (!(gamma_smaller < s.gamma)) throw ArgumentError("gamma' must be smaller than gamma");
    BumpSpec t = s;
    t.gamma = gamma_smaller;
    s.validate();
    t.validate();
    const auto xs = shell_points(grid.d(), s.c1, shell_samples);
    std::vector<double> gap(xs.size());
    parallel_for(xs.size(), [&](std::size_t k) {
        gap[k] = extremal_minus_bump(t, p, xs[k], grid) - extremal_minus_bump(s, p, xs[k], grid);
    });
    OrderingReport rep;
    rep.samples = static_cast<int>(xs.size());
    rep.worst_gap = kInf;
    for (double g : gap) {
        rep.worst_gap = std::min(rep.worst_gap, g);
        if (g < 0) ++rep.violations;
    }
    return rep;
}

// ---------------------------------------------------------------------------------------------
// Barrier

Barrier::Barrier(const BarrierParams& bp) : bp_(bp) {
    if (bp.d != 1 && bp.d != 2) throw ArgumentError("barrier dimension must be 1 or 2");
    if (!(bp.r > 0 && bp.r < 1)) throw ArgumentError("r must lie in (0,1)");
    if (!(bp.alpha > 0 && bp.alpha < 2)) throw ArgumentError("alpha must lie in (0,2)");
    if (!(bp.q0 >= 0) || !(bp.C5 >= 0)) throw ArgumentError("q0 and C5 must be nonnegative");
    spec_.gamma = bp.gamma1;
    spec_.q = bp.q1;
    spec_.c1 = bp.c1;
    spec_.validate();
    b_e1_ = 1.0;
    phi0_ = phi({0, 0});
    log_r2a_ = 2 * bp.alpha * std::log(bp.r);
    level_ = std::exp(-bp.q0 * log_r2a_) * phi0_;
}

double Barrier::phi(const Vec& z) const { return std::max(bump(spec_, z) - b_e1_, 0.0); }

Vec Barrier::phi_gradient(const Vec& z) const {
    return norm(z) < 1 ? bump_gradient(spec_, z, bp_.d) : Vec{0, 0};
}

Mat Barrier::phi_hessian(const Vec& z) const {
    return norm(z) < 1 ? bump_hessian(spec_, z, bp_.d) : Mat{0, 0, 0, 0};
}

Field Barrier::phi_field() const {
    Field f;
    f.d = bp_.d;
    const Barrier self = *this;
    f.value = [self](const Vec& z) { return self.phi(z); };
    f.grad = [self](const Vec& z) { return self.phi_gradient(z); };
    f.hess = [self](const Vec& z) { return self.phi_hessian(z); };
    f.far_value = 0.0;
    f.far_radius = 1.0;
    f.sup_bound = phi0_;
    return f;
}

namespace {
inline void check_time(double t) {
    if (!(t > 0)) throw DomainError("barrier time must be positive");
}
}  // namespace

double Barrier::p_tilde(const Vec& x, double t) const {
    check_time(t);
    const double ra = std::pow(bp_.r, bp_.alpha);
    if (t <= ra) return std::pow(t, -bp_.q0) * phi((bp_.r / std::pow(t, 1 / bp_.alpha)) * x);
    return std::exp(-bp_.C5 * (t - ra)) * std::pow(bp_.r, -bp_.alpha * bp_.q0) * phi(x);
}

double Barrier::cap(double t) const {
    if (t > std::pow(bp_.r, bp_.alpha)) return kInf;
    return phi0_ * std::exp(bp_.q0 * (std::log(t) - log_r2a_));
}

bool Barrier::truncated(const Vec& x, double t) const {
    if (t > std::pow(bp_.r, bp_.alpha)) return false;
    return phi((bp_.r / std::pow(t, 1 / bp_.alpha)) * x) >= cap(t);
}

double Barrier::operator()(const Vec& x, double t) const {
    check_time(t);
    const double ra = std::pow(bp_.r, bp_.alpha);
    if (t <= ra) {
        const double v = phi((bp_.r / std::pow(t, 1 / bp_.alpha)) * x);
        if (v == 0) return 0.0;
        return std::min(std::exp(-bp_.q0 * (std::log(t) - log_r2a_)) * v / phi0_, 1.0);
    }
    return std::exp(-bp_.C5 * (t - ra) + bp_.alpha * bp_.q0 * std::log(bp_.r)) * phi(x) / phi0_;
}

namespace {
// c(t) in p = c(t) w(t) shape_t.
double barrier_factor(const BarrierParams& b, double phi0, double log_r2a, double t) {
    const double ra = std::pow(b.r, b.alpha);
    if (t <= ra) return std::exp(-b.q0 * (std::log(t) - log_r2a)) / (t * phi0);
    return std::exp(-b.C5 * (t - ra) + b.alpha * b.q0 * std::log(b.r)) / phi0;
}
}  // namespace

double Barrier::shape_weight(double t) const {
    check_time(t);
    return t <= std::pow(bp_.r, bp_.alpha) ? t : 1.0;
}

double Barrier::scaled_p_t(const Vec& x, double t) const {
    check_time(t);
    if (truncated(x, t)) return 0.0;
    if (t <= std::pow(bp_.r, bp_.alpha)) {
        const Vec z = (bp_.r / std::pow(t, 1 / bp_.alpha)) * x;
        return -bp_.q0 * phi(z) - dot(phi_gradient(z), z) / bp_.alpha;
    }
    return -bp_.C5 * phi(x);
}

Vec Barrier::scaled_p_grad(const Vec& x, double t) const {
    check_time(t);
    if (truncated(x, t)) return {0, 0};
    if (t <= std::pow(bp_.r, bp_.alpha)) {
        const double s = bp_.r / std::pow(t, 1 / bp_.alpha);
        return (t * s) * phi_gradient(s * x);
    }
    return phi_gradient(x);
}

double Barrier::p_t(const Vec& x, double t) const {
    const double v = scaled_p_t(x, t);
    return v == 0 ? 0.0 : barrier_factor(bp_, phi0_, log_r2a_, t) * v;
}

Vec Barrier::p_grad(const Vec& x, double t) const {
    const Vec g = scaled_p_grad(x, t);
    if (g[0] == 0 && g[1] == 0) return g;
    return barrier_factor(bp_, phi0_, log_r2a_, t) * g;
}

Field Barrier::shape(double t) const {
    check_time(t);
    const Barrier self = *this;
    const double ra = std::pow(bp_.r, bp_.alpha);
    if (t > ra) return phi_field();
    const double s = bp_.r / std::pow(t, 1 / bp_.alpha), c = cap(t);
    Field f;
    f.d = bp_.d;
    f.value = [self, s, c](const Vec& y) { return std::min(self.phi(s * y), c); };
    f.grad = [self, s, c](const Vec& y) { return self.phi(s * y) >= c ? Vec{0, 0} : s * self.phi_gradient(s * y); };
    f.hess = [self, s, c](const Vec& y) -> Mat {
        if (self.phi(s * y) >= c) return {0, 0, 0, 0};
        Mat H = self.phi_hessian(s * y);
        for (double& e : H) e *= s * s;
        return H;
    };
    f.far_value = 0.0;
    f.far_radius = 1 / s;
    f.sup_bound = std::min(phi0_, c);
    return f;
}

Field Barrier::slice(double t) const {
    const Field sh = shape(t);
    const double k = barrier_factor(bp_, phi0_, log_r2a_, t) * shape_weight(t);
    const Barrier self = *this;
    Field f = sh;
    f.value = [self, t](const Vec& x) { return self(x, t); };
    f.grad = [self, t](const Vec& x) { return self.p_grad(x, t); };
    f.hess = [sh, k](const Vec& x) {
        Mat H = sh.hess(x);
        for (double& e : H) e = e == 0 ? 0.0 : e * k;
        return H;
    };
    f.sup_bound = 1.0;
    return f;
}

BarrierBuild build_barrier(double r, const ClassParams& p, const AnnulusGrid& grid, const BarrierBuildOptions& opt) {
    p.validate();
    if (!(r > 0 && r < 1)) throw ArgumentError("r must lie in (0,1)");
    if (!(opt.margin >= 1)) throw ArgumentError("margin must be >= 1");
    const double C0 = p.alpha >= 1 ? p.C0 : 0.0;

    // Shell constant for the worst sampled order, with 1 - c1/2 >= 7/8.
    std::vector<double> orders = opt.search.alpha_samples.empty() ? std::vector<double>{p.alpha}
                                                                   : opt.search.alpha_samples;
    double C = 0;
    for (double a : orders) {
        const double c0 = a >= 1 ? C0 : 0.0;
        C = std::max(C, std::max((1 / a + r * c0 * 8 / 7) / std::pow(r, a), c0));
    }
    C *= opt.margin;

    BarrierBuild out;
    out.search = search_bump_params(C, p, grid, opt.search);
    BarrierParams& bp = out.params;
    bp.d = grid.d();
    bp.r = r;
    bp.alpha = p.alpha;
    bp.C0 = C0;
    bp.gamma1 = out.search.gamma1;
    bp.q1 = out.search.q1;
    bp.c1 = out.search.c1;
    bp.c2 = out.search.c2;
    bp.C = C;
    bp.T = opt.T;
    bp.q0 = 0;
    bp.C5 = 0;
    const Barrier B0(bp);
    const Field Phi = B0.phi_field();

    // Interior samples over B_1, denser on the bridge.
    std::vector<Vec> zs;
    const int n = std::max(opt.interior_samples, 3);
    const double a = 1 - bp.c1, b = 1 - bp.c1 / 2;
    std::vector<double> radii;
    for (int i = 0; i < n; ++i) radii.push_back(a * i / (n - 1));
    for (int i = 1; i <= n; ++i) radii.push_back(a + (b - a) * i / n);
    for (int i = 1; i < n; ++i) radii.push_back(b + (1 - b) * i / n);
    for (std::size_t i = 0; i < radii.size(); ++i) {
        const double th = 0.53 * i;
        zs.push_back(bp.d == 1 ? Vec{radii[i], 0} : Vec{radii[i] * std::cos(th), radii[i] * std::sin(th)});
    }
    std::vector<double> mphi(zs.size());
    parallel_for(zs.size(), [&](std::size_t k) { mphi[k] = minus_general(p, Phi, zs[k], grid); });

    const double ra = std::pow(r, p.alpha);
    double q0 = 0, C5 = 0, eps0 = kInf;
    for (std::size_t k = 0; k < zs.size(); ++k) {
        const double ph = Phi.value(zs[k]);
        if (!(ph > 0)) continue;
        const Vec g = B0.phi_gradient(zs[k]);
        const double num_q = -dot(g, zs[k]) / p.alpha + r * C0 * norm(g) - ra * mphi[k];
        const double num_c = C0 * norm(g) - mphi[k];
        q0 = std::max(q0, num_q / ph);
        C5 = std::max(C5, num_c / ph);
        if (norm(zs[k]) <= 0.75) eps0 = std::min(eps0, ph / Phi.value({0, 0}));
    }
    eps0 = std::min(eps0, Phi.value({0.75, 0}) / Phi.value({0, 0}));
    bp.q0 = std::max(opt.margin * q0, 0.1);
    bp.C5 = std::max(opt.margin * C5, 0.1);
    bp.eps0 = eps0;
    if (!(bp.eps0 > 0)) throw SearchFailure("Phi vanishes on B_3/4; eps0 is not positive");
    return out;
}

BarrierReport verify_barrier(const BarrierParams& bp, const ClassParams& p_in, const AnnulusGrid& grid,
                             const VerifyOptions& opt) {
    const Barrier B(bp);
    ClassParams p = at_order(p_in, bp.alpha);
    p.C0 = bp.C0;
    p.validate();
    const int d = bp.d;
    const double r = bp.r, a = bp.alpha, ra = std::pow(r, a), r2a = std::pow(r, 2 * a);
    const double C0 = a >= 1 ? bp.C0 : 0.0;

    // Times: log-spaced through the self-similar range, linear after r^alpha.
    std::vector<double> ts;
    const int nt1 = std::max(opt.n_t / 2, 2), nt2 = std::max(opt.n_t - nt1, 2);
    for (int i = 0; i <= nt1; ++i) ts.push_back(0.5 * r2a * std::pow(2 * ra / r2a, double(i) / nt1));
    for (double t : {r2a, 0.999 * ra, ra}) ts.push_back(t);
    for (int i = 1; i <= nt2; ++i) ts.push_back(ra + (bp.T - ra) * double(i) / nt2);
    std::sort(ts.begin(), ts.end());
    ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
    ts.erase(std::remove_if(ts.begin(), ts.end(), [&](double t) { return t > bp.T; }), ts.end());

    // Radii in [0,1] with extra points around the kinks at r and 1.
    std::vector<double> rs;
    for (int i = 0; i < opt.n_x; ++i) rs.push_back(double(i) / (opt.n_x - 1));
    for (double e : {1e-3, 1e-2}) {
        rs.push_back(r - e);
        rs.push_back(r + e);
        rs.push_back(1 - e);
    }
    std::sort(rs.begin(), rs.end());
    std::vector<Vec> xs;
    for (std::size_t i = 0; i < rs.size(); ++i) {
        if (d == 1) {
            xs.push_back({rs[i], 0});
            if (rs[i] > 0) xs.push_back({-rs[i], 0});
        } else {
            const double th = 0.41 * i;
            xs.push_back({rs[i] * std::cos(th), rs[i] * std::sin(th)});
        }
    }

    BarrierReport rep;
    rep.tol = opt.tol;
    std::vector<ResidualRow> rows1;
    for (double t : ts)
        for (const Vec& x : xs) {
            if (norm(x) > 1) continue;
            if (norm(x) < r && t <= ra) continue;
            if (t <= ra && std::abs(norm(x) * r / std::pow(t, 1 / a) - 1) < 1e-9) continue;
            rows1.push_back({x, t, 1, 0});
        }
    parallel_for(rows1.size(), [&](std::size_t k) {
        const Vec& x = rows1[k].x;
        const double t = rows1[k].t;
        // M^- is positively homogeneous, so the residual is evaluated in shape units.
        const double m = minus_general(p, B.shape(t), x, grid);
        rows1[k].residual = B.scaled_p_t(x, t) + C0 * norm(B.scaled_p_grad(x, t)) - B.shape_weight(t) * m;
    });

    std::vector<ResidualRow> rows;
    rows.insert(rows.end(), rows1.begin(), rows1.end());
    // (5.2) p <= 1 on B_r x (0, r^alpha].
    for (double t : ts)
        if (t <= ra)
            for (const Vec& x : xs)
                if (norm(x) < r) rows.push_back({x, t, 2, B(x, t) - 1});
    // (5.3) p <= 0 outside B_1 for all t, and outside B_r as t -> 0+.
    for (double t : ts)
        for (double s : {1.0, 1.25, 2.0}) {
            rows.push_back({{s, 0}, t, 3, B({s, 0}, t)});
            rows.push_back({{-s / std::sqrt(double(d)), d == 2 ? s / std::sqrt(2.0) : 0}, t, 3,
                            B({-s / std::sqrt(double(d)), d == 2 ? s / std::sqrt(2.0) : 0}, t)});
        }
    const double t0 = 1e-6 * r2a;
    for (const Vec& x : xs)
        if (norm(x) >= r) rows.push_back({x, t0, 3, B(x, t0)});
    // (5.4) lower bound on B_3/4 after r^alpha.
    for (double t : ts)
        if (t >= ra)
            for (const Vec& x : xs)
                if (norm(x) <= 0.75) {
                    const double lb = bp.eps0 * std::pow(r, a * bp.q0) * std::exp(-bp.C5 * (t - ra));
                    rows.push_back({x, t, 4, (lb - B(x, t)) / lb});
                }

    double* res[5] = {nullptr, &rep.res1, &rep.res2, &rep.res3, &rep.res4};
    ResidualRow* worst[5] = {nullptr, &rep.worst1, &rep.worst2, &rep.worst3, &rep.worst4};
    for (int b = 1; b <= 4; ++b) *res[b] = -kInf;
    for (const auto& row : rows)
        if (row.residual > *res[row.branch]) {
            *res[row.branch] = row.residual;
            *worst[row.branch] = row;
        }
    for (int b = 1; b <= 4; ++b)
        if (*res[b] == -kInf) *res[b] = 0;
    rep.rows = std::move(rows);
    if (!rep.pass() && opt.throw_on_failure) {
        const ResidualRow* w = &rep.worst1;
        for (int b = 2; b <= 4; ++b)
            if (worst[b]->residual - opt.tol > w->residual - opt.tol) w = worst[b];
        throw VerificationFailure("barrier inequality " + std::to_string(w->branch) + " fails: residual " +
                                  fmt(w->residual) + " at " + point_str(w->x, d) + " t=" + fmt(w->t));
    }
    return rep;
}

}  // namespace nlreg
