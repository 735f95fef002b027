#include "nlreg/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <random>
#include <sstream>

#include "nlreg/errors.hpp"
#include "nlreg/quadrature.hpp"

namespace nlreg {

namespace {

constexpr double kPi = std::numbers::pi;

double line_density(const LineComponent& L, double s) {
    const double v = L.radial_density(s);
    if (!std::isfinite(v)) throw KernelEvalError("line density is not finite");
    return v;
}

double simpson_rel(const std::function<double(double)>& f, double a, double b) {
    const double rough = (b - a) * (f(a) + 4 * f(0.5 * (a + b)) + f(b)) / 6.0;
    const double tol = std::max(1e-8 * std::abs(rough), 1e-300);
    return adaptive_simpson(f, a, b, tol);
}

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

double unit_uniform(std::mt19937_64& g) { return static_cast<double>(g() >> 11) * 0x1.0p-53; }

}  // namespace

void ClassParams::validate() const {
    auto fail = [](const std::string& m) { throw ParameterError("class parameters: " + m); };
    if (!(alpha0 > 0)) fail("alpha0 must be positive");
    if (!(alpha0 <= alpha && alpha < 2)) fail("need alpha0 <= alpha < 2");
    if (!(lambda > 0)) fail("lambda must be positive");
    if (!(Lambda >= lambda)) fail("Lambda must be >= lambda");
    if (!(mu > 0 && mu <= 1)) fail("mu must lie in (0,1]");
    if (!(C0 >= 0)) fail("C0 must be nonnegative");
    if (alpha < 1 && C0 != 0) fail("C0 must vanish when alpha < 1");
}

double ClassParams::budget(double r) const { return (2 - alpha) * Lambda * std::pow(r, -alpha); }
double ClassParams::floor_level(int d, double r) const { return (2 - alpha) * lambda * std::pow(r, -d - alpha); }
double ClassParams::odd_cap(double r) const { return Lambda * std::abs(1 - alpha) * std::pow(r, 1 - alpha); }

double KernelSpec::eval(const Vec& h) const {
    if (!density) return 0.0;
    const double v = density(h);
    if (!std::isfinite(v)) throw KernelEvalError("kernel density is not finite");
    return v;
}

void KernelSpec::validate() const {
    if (d != 1 && d != 2) throw ArgumentError("kernel dimension must be 1 or 2");
    for (const auto& L : lines) {
        if (std::abs(norm(L.direction) - 1.0) > 1e-12) throw ArgumentError("line direction is not a unit vector");
        if (d == 1 && L.direction[1] != 0.0) throw ArgumentError("line direction outside R^1");
        if (!L.radial_density) throw ArgumentError("line component without density");
    }
    if (symmetric && density) {
        std::mt19937_64 g(12345);
        for (int i = 0; i < 256; ++i) {
            const double rho = std::exp2(-12 + 18 * unit_uniform(g));
            const double th = 2 * kPi * unit_uniform(g);
            Vec h = d == 1 ? Vec{unit_uniform(g) < 0.5 ? rho : -rho, 0.0} : Vec{rho * std::cos(th), rho * std::sin(th)};
            const double a = eval(h), b = eval(-h);
            if (std::abs(a - b) > 1e-12 * std::max({1.0, std::abs(a), std::abs(b)}))
                throw ArgumentError("kernel declared symmetric but K(h) != K(-h)");
        }
    }
}

int Ring::locate(const Vec& h) const {
    if (d == 1) {
        const double a = std::abs(h[0]);
        if (a < r || a >= 2 * r) return -1;
        int bin = static_cast<int>((a - r) / r * n_rad);
        bin = std::clamp(bin, 0, n_rad - 1);
        return h[0] > 0 ? bin : n_rad + bin;
    }
    const double rho2 = h[0] * h[0] + h[1] * h[1];
    if (rho2 < r * r || rho2 >= 4 * r * r) return -1;
    int ir = static_cast<int>((rho2 - r * r) / (3 * r * r) * n_rad);
    ir = std::clamp(ir, 0, n_rad - 1);
    int ia = static_cast<int>((std::atan2(h[1], h[0]) + kPi) / (2 * kPi) * n_ang);
    ia = std::clamp(ia, 0, n_ang - 1);
    return ir * n_ang + ia;
}

AnnulusGrid::AnnulusGrid(int d, double r_min, double r_max, int n_radial, int n_angular, double max_cell_width)
    : d_(d), r_min_(r_min), r_max_(r_max), n_radial_(n_radial), n_angular_(n_angular),
      max_cell_width_(max_cell_width) {
    if (d != 1 && d != 2) throw ArgumentError("grid dimension must be 1 or 2");
    if (n_radial < 1 || (d == 2 && (n_angular < 2 || n_angular % 2 != 0)))
        throw ArgumentError("grid needs n_radial >= 1 and an even n_angular >= 2");
    if (!(max_cell_width > 0)) throw ArgumentError("max_cell_width must be positive");
    radii_ = dyadic_annuli(r_min, r_max);
}

Ring AnnulusGrid::ring(double r) const {
    if (!(r > 0)) throw ArgumentError("ring radius must be positive");
    Ring R;
    R.d = d_;
    R.r = r;
    R.volume = ring_volume(d_, r);
    if (d_ == 1) {
        int n = n_radial_;
        if (std::isfinite(max_cell_width_)) n = std::max(n, static_cast<int>(std::ceil(r / max_cell_width_)));
        R.n_rad = n;
        const double w = r / n;
        R.cells.resize(2 * n);
        R.antipode.resize(2 * n);
        for (int i = 0; i < n; ++i) {
            const double c = r + (i + 0.5) * w;
            R.cells[i] = {{c, 0.0}, w};
            R.cells[n + i] = {{-c, 0.0}, w};
            R.antipode[i] = n + i;
            R.antipode[n + i] = i;
        }
        return R;
    }
    int nr = n_radial_, na = n_angular_;
    if (std::isfinite(max_cell_width_)) {
        nr = std::max(nr, static_cast<int>(std::ceil(r / max_cell_width_)));
        na = std::max(na, static_cast<int>(std::ceil(4 * kPi * r / max_cell_width_)));
        if (na % 2) ++na;
    }
    R.n_rad = nr;
    R.n_ang = na;
    const double vol = 3 * kPi * r * r / (nr * na);
    const double dth = 2 * kPi / na;
    R.cells.resize(static_cast<std::size_t>(nr) * na);
    R.antipode.resize(R.cells.size());
    for (int ir = 0; ir < nr; ++ir) {
        const double rho = r * std::sqrt(1 + 3 * (ir + 0.5) / nr);
        for (int ia = 0; ia < na; ++ia) {
            const double th = -kPi + (ia + 0.5) * dth;
            const int idx = ir * na + ia;
            R.cells[idx] = {{rho * std::cos(th), rho * std::sin(th)}, vol};
            R.antipode[idx] = ir * na + (ia + na / 2) % na;
        }
    }
    return R;
}

std::vector<std::pair<double, double>> AnnulusGrid::line_cells(double r) const {
    int n = n_radial_;
    if (std::isfinite(max_cell_width_)) n = std::max(n, static_cast<int>(std::ceil(r / max_cell_width_)));
    const double w = r / n;
    std::vector<std::pair<double, double>> out(2 * n);
    for (int i = 0; i < n; ++i) {
        out[i] = {r + (i + 0.5) * w, w};
        out[n + i] = {-(r + (i + 0.5) * w), w};
    }
    return out;
}

AnnulusGrid AnnulusGrid::with_range(double r_min, double r_max) const {
    return AnnulusGrid(d_, r_min, r_max, n_radial_, n_angular_, max_cell_width_);
}

AnnulusGrid AnnulusGrid::refined() const {
    return AnnulusGrid(d_, r_min_, r_max_, 2 * n_radial_, d_ == 2 ? 2 * n_angular_ : n_angular_,
                       max_cell_width_ / 2);
}

std::vector<double> dyadic_annuli(double r_min, double r_max) {
    if (!(r_min > 0) || !(r_max > r_min) || !std::isfinite(r_max))
        throw ArgumentError("dyadic_annuli needs 0 < r_min < r_max");
    std::vector<double> out;
    double r = r_min;
    while (r < r_max) {
        out.push_back(r);
        r *= 2;
    }
    return out;
}

double annulus_mass(const KernelSpec& K, double r, const AnnulusGrid& grid) {
    double mass = 0;
    if (K.density) {
        const Ring R = grid.ring(r);
        for (const auto& c : R.cells) {
            const double v = K.eval(c.h);
            if (v < 0) throw KernelEvalError("kernel density is negative");
            mass += v * c.vol;
        }
    }
    for (const auto& L : K.lines) {
        mass += simpson_rel(
            [&](double s) {
                const double a = line_density(L, s), b = line_density(L, -s);
                if (a < 0 || b < 0) throw KernelEvalError("line density is negative");
                return a + b;
            },
            r, 2 * r);
    }
    return mass;
}

Vec annulus_first_moment(const KernelSpec& K, double r, const AnnulusGrid& grid) {
    Vec m{0, 0};
    if (K.density) {
        const Ring R = grid.ring(r);
        for (const auto& c : R.cells) m = m + (K.eval(c.h) * c.vol) * c.h;
    }
    for (const auto& L : K.lines) {
        const double s1 = simpson_rel([&](double s) { return s * (line_density(L, s) - line_density(L, -s)); }, r,
                                      2 * r);
        m = m + s1 * L.direction;
    }
    return m;
}

AssumptionReport check_assumptions(const KernelSpec& K, const ClassParams& p, const AnnulusGrid& grid, double tol) {
    p.validate();
    if (K.d != grid.d()) throw ArgumentError("kernel and grid dimensions differ");
    AssumptionReport rep;
    rep.tol = tol;
    rep.sampled_radii = grid.radii();
    for (double r : grid.radii()) {
        RingReport rr;
        rr.r = r;
        const Ring R = grid.ring(r);
        std::vector<double> vals(R.cells.size(), 0.0);
        double mass = 0;
        Vec mom{0, 0};
        for (std::size_t i = 0; i < R.cells.size(); ++i) {
            vals[i] = K.eval(R.cells[i].h);
            if (vals[i] < 0) rr.a1 = false;
            mass += vals[i] * R.cells[i].vol;
            mom = mom + (vals[i] * R.cells[i].vol) * R.cells[i].h;
        }
        for (const auto& L : K.lines) {
            for (const auto& [s, w] : grid.line_cells(r))
                if (line_density(L, s) < 0) rr.a1 = false;
            mass += simpson_rel([&](double s) { return line_density(L, s) + line_density(L, -s); }, r, 2 * r);
            const double s1 = simpson_rel(
                [&](double s) { return s * (line_density(L, s) - line_density(L, -s)); }, r, 2 * r);
            mom = mom + s1 * L.direction;
        }
        rr.mass = mass;
        rr.mass_bound = p.budget(r);
        rr.a2 = rr.a1 && mass <= rr.mass_bound * (1 + tol);

        const double F = p.floor_level(K.d, r) * (1 - tol);
        for (std::size_t i = 0; i < R.cells.size(); ++i) {
            if (vals[i] >= F && vals[R.antipode[i]] >= F) {
                rr.floor_cells.push_back(static_cast<int>(i));
                rr.floor_measure += R.cells[i].vol;
            }
        }
        rr.floor_required = p.mu * R.volume;
        rr.a3 = rr.a1 && rr.floor_measure >= rr.floor_required * (1 - tol);

        rr.odd_norm = norm(mom);
        rr.odd_bound = p.odd_cap(r);
        const double abs_tol = 1e-12 * 2 * r * std::abs(mass);
        rr.a4 = rr.a1 && rr.odd_norm <= rr.odd_bound * (1 + tol) + abs_tol;

        rep.a1 = rep.a1 && rr.a1;
        rep.a2 = rep.a2 && rr.a2;
        rep.a3 = rep.a3 && rr.a3;
        rep.a4 = rep.a4 && rr.a4;
        rep.rings.push_back(std::move(rr));
    }
    return rep;
}

namespace dyadic_constants {
double second_moment_inner(double a) { return (2 - a) * std::exp2(a) / (1 - std::exp2(a - 2)); }
double first_moment_inner(double a) { return std::abs(1 - a) * std::exp2(a - 1) / (1 - std::exp2(a - 1)); }
double first_moment_outer(double a) { return (a - 1) / (1 - std::exp2(1 - a)); }
double tail_mass(double a) { return (2 - a) / (1 - std::exp2(-a)); }
}  // namespace dyadic_constants

namespace {

template <class F>
void for_rings(const KernelSpec& K, const MomentQuadrature& q, double r, bool inner, F&& f) {
    const AnnulusGrid g(K.d, r, 2 * r, q.n_radial, q.n_angular);
    for (int k = 0; k < q.depth; ++k) {
        const double rk = inner ? std::ldexp(r, -k - 1) : std::ldexp(r, k);
        const Ring R = g.ring(rk);
        if (K.density)
            for (const auto& c : R.cells) f(c.h, K.eval(c.h) * c.vol);
        for (const auto& L : K.lines)
            for (const auto& [s, w] : g.line_cells(rk)) f(s * L.direction, line_density(L, s) * w);
    }
}

}  // namespace

double second_moment_inner(const KernelSpec& K, const ClassParams&, double r, const MomentQuadrature& q) {
    double v = 0;
    for_rings(K, q, r, true, [&](const Vec& h, double m) { v += dot(h, h) * m; });
    return v;
}

double first_moment_inner(const KernelSpec& K, const ClassParams& p, double r, const MomentQuadrature& q) {
    if (p.alpha >= 1) throw ModeError("inner first moment bound needs alpha < 1");
    Vec v{0, 0};
    for_rings(K, q, r, true, [&](const Vec& h, double m) { v = v + m * h; });
    return norm(v);
}

double first_moment_outer(const KernelSpec& K, const ClassParams& p, double r, const MomentQuadrature& q) {
    if (p.alpha <= 1) throw ModeError("outer first moment bound needs alpha > 1");
    Vec v{0, 0};
    for_rings(K, q, r, false, [&](const Vec& h, double m) { v = v + m * h; });
    return norm(v);
}

double tail_mass(const KernelSpec& K, const ClassParams&, double r, const MomentQuadrature& q) {
    double v = 0;
    for_rings(K, q, r, false, [&](const Vec&, double m) { v += m; });
    return v;
}

MomentBoundsReport moment_bounds_report(const KernelSpec& K, const ClassParams& p, double r,
                                        const MomentQuadrature& q) {
    p.validate();
    const double a = p.alpha, L = p.Lambda;
    MomentBoundsReport rep;
    rep.r = r;
    rep.second_inner = {"second_moment_inner", second_moment_inner(K, p, r, q),
                        dyadic_constants::second_moment_inner(a) * L * std::pow(r, 2 - a), true};
    rep.first_inner.name = "first_moment_inner";
    rep.first_outer.name = "first_moment_outer";
    if (a < 1) {
        rep.first_inner.value = first_moment_inner(K, p, r, q);
        rep.first_inner.bound = dyadic_constants::first_moment_inner(a) * L * std::pow(r, 1 - a);
        rep.first_inner.applicable = true;
    }
    if (a > 1) {
        rep.first_outer.value = first_moment_outer(K, p, r, q);
        rep.first_outer.bound = dyadic_constants::first_moment_outer(a) * L * std::pow(r, 1 - a);
        rep.first_outer.applicable = true;
    }
    rep.tail = {"tail_mass", tail_mass(K, p, r, q), dyadic_constants::tail_mass(a) * L * std::pow(r, -a), true};
    return rep;
}

KernelSpec make_frac_laplacian(int d, double alpha, double scale) {
    KernelSpec K;
    K.d = d;
    K.symmetric = true;
    K.name = "frac_laplacian";
    const double c = scale * (2 - alpha), e = -d - alpha;
    K.density = [c, e](const Vec& h) { return c * std::pow(norm(h), e); };
    return K;
}

KernelSpec make_line_kernel(int d, double alpha, double scale) {
    KernelSpec K;
    K.d = d;
    K.symmetric = true;
    K.name = "line";
    const double c = scale * (2 - alpha);
    LineComponent L;
    L.direction = d == 1 ? Vec{1.0, 0.0} : Vec{0.0, 1.0};
    L.radial_density = [c, alpha](double s) { return c * std::pow(std::abs(s), -1 - alpha); };
    K.lines.push_back(L);
    return K;
}

KernelSpec make_line_plus_frac(int d, double alpha) {
    KernelSpec K = make_frac_laplacian(d, alpha);
    K.lines = make_line_kernel(d, alpha).lines;
    K.name = "line_plus_frac";
    return K;
}

namespace {

struct RandomPattern {
    int d = 1;
    int n_r = 8, n_a = 1;
    double alpha = 1;
    std::vector<std::vector<double>> coeff;  // per ring slot, per cell
};

constexpr int kPatternRings = 128;

}  // namespace

KernelSpec make_random_admissible(const ClassParams& p, std::uint64_t seed, int d) {
    p.validate();
    if (d != 1 && d != 2) throw ArgumentError("dimension must be 1 or 2");
    if (p.mu * p.lambda * ring_volume(d, 1.0) > p.Lambda)
        throw ParameterError("floor mass mu*lambda*|B2\\B1| exceeds the Lambda budget");

    auto pat = std::make_shared<RandomPattern>();
    pat->d = d;
    pat->alpha = p.alpha;
    if (d == 2) {
        pat->n_r = 4;
        pat->n_a = 16;
    }
    const int ncell = d == 1 ? 2 * pat->n_r : pat->n_r * pat->n_a;
    const int npair = ncell / 2;
    std::vector<double> w(ncell);
    std::vector<Vec> mhat(ncell);
    std::vector<int> anti(ncell);
    if (d == 1) {
        const int nb = pat->n_r;
        for (int i = 0; i < nb; ++i) {
            const double a = 1 + double(i) / nb, b = 1 + double(i + 1) / nb;
            w[i] = w[nb + i] = 1.0 / nb;
            mhat[i] = {(b * b - a * a) / 2, 0};
            mhat[nb + i] = {-(b * b - a * a) / 2, 0};
            anti[i] = nb + i;
            anti[nb + i] = i;
        }
    } else {
        const int nr = pat->n_r, na = pat->n_a;
        const double dth = 2 * kPi / na;
        for (int ir = 0; ir < nr; ++ir) {
            const double r1 = std::sqrt(1 + 3.0 * ir / nr), r2 = std::sqrt(1 + 3.0 * (ir + 1) / nr);
            for (int ia = 0; ia < na; ++ia) {
                const int c = ir * na + ia;
                const double t1 = -kPi + ia * dth, t2 = t1 + dth;
                w[c] = 3 * kPi / (nr * na);
                const double rad = (r2 * r2 * r2 - r1 * r1 * r1) / 3;
                mhat[c] = {rad * (std::sin(t2) - std::sin(t1)), rad * (std::cos(t1) - std::cos(t2))};
                anti[c] = ir * na + (ia + na / 2) % na;
            }
        }
    }
    std::vector<std::pair<int, int>> pairs;
    for (int c = 0; c < ncell; ++c)
        if (c < anti[c]) pairs.emplace_back(c, anti[c]);

    const int floor_pairs = std::min(npair, static_cast<int>(std::ceil(p.mu * npair - 1e-9)));
    const double floor_mass = p.lambda * 2 * floor_pairs * w[0];
    if (floor_mass > p.Lambda * (1 + 1e-12)) throw ParameterError("floor set does not fit in the Lambda budget");
    const double cap = p.alpha == 1 ? 0.0 : 0.9 * p.Lambda * std::abs(1 - p.alpha) / (2 - p.alpha);

    pat->coeff.resize(kPatternRings);
    for (int slot = 0; slot < kPatternRings; ++slot) {
        std::mt19937_64 g(splitmix(seed * 0x100000001B3ull + static_cast<std::uint64_t>(slot)));
        std::vector<int> order(npair);
        for (int i = 0; i < npair; ++i) order[i] = i;
        for (int i = npair - 1; i > 0; --i) std::swap(order[i], order[g() % (i + 1)]);
        std::vector<double> a(ncell, 0.0);
        std::vector<char> is_floor(ncell, 0);
        for (int i = 0; i < floor_pairs; ++i) {
            const auto [c1, c2] = pairs[order[i]];
            const double v = p.lambda * (1 + 0.5 * unit_uniform(g));
            a[c1] = a[c2] = v;
            is_floor[c1] = is_floor[c2] = 1;
        }
        for (int c = 0; c < ncell; ++c)
            if (!is_floor[c]) {
                const double u = unit_uniform(g), v = unit_uniform(g);
                a[c] = u < 0.5 ? 0.0 : 0.5 * p.lambda * v;
            }
        double mass = 0;
        for (int c = 0; c < ncell; ++c) mass += a[c] * w[c];
        if (floor_mass > 0.95 * p.Lambda) {
            for (int c = 0; c < ncell; ++c) a[c] = is_floor[c] ? p.lambda : 0.0;
        } else if (mass > 0.95 * p.Lambda) {
            const double s = (0.95 * p.Lambda - floor_mass) / (mass - floor_mass);
            for (int c = 0; c < ncell; ++c) a[c] = is_floor[c] ? p.lambda + s * (a[c] - p.lambda) : s * a[c];
        }
        Vec m{0, 0};
        for (int c = 0; c < ncell; ++c) m = m + a[c] * mhat[c];
        const double mn = norm(m);
        if (mn > cap) {
            const double theta = mn > 0 ? 1 - cap / mn : 1.0;
            std::vector<double> b = a;
            for (int c = 0; c < ncell; ++c)
                if (!is_floor[c]) b[c] = (1 - theta) * a[c] + theta * 0.5 * (a[c] + a[anti[c]]);
            a = b;
        }
        pat->coeff[slot] = std::move(a);
    }

    KernelSpec K;
    K.d = d;
    K.symmetric = false;
    K.name = "random_admissible:" + std::to_string(seed);
    K.density = [pat](const Vec& h) {
        const double rho = norm(h);
        if (!(rho > 0) || !std::isfinite(rho)) return 0.0;
        int e = 0;
        std::frexp(rho, &e);
        const int k = e - 1;  // rho in [2^k, 2^{k+1})
        const double r = std::ldexp(1.0, k);
        const int slot = ((k % kPatternRings) + kPatternRings) % kPatternRings;
        const auto& a = pat->coeff[slot];
        int c;
        if (pat->d == 1) {
            const int nb = pat->n_r;
            int bin = std::clamp(static_cast<int>((rho - r) / r * nb), 0, nb - 1);
            c = h[0] > 0 ? bin : nb + bin;
        } else {
            const int nr = pat->n_r, na = pat->n_a;
            int ir = std::clamp(static_cast<int>((rho * rho - r * r) / (3 * r * r) * nr), 0, nr - 1);
            int ia = std::clamp(static_cast<int>((std::atan2(h[1], h[0]) + kPi) / (2 * kPi) * na), 0, na - 1);
            c = ir * na + ia;
        }
        return (2 - pat->alpha) * a[c] * std::exp2(-k * (pat->d + pat->alpha));
    };
    return K;
}

KernelSpec rescale(const KernelSpec& K, double s, double alpha) {
    if (!(s > 0)) throw ArgumentError("scale factor must be positive");
    KernelSpec out = K;
    out.name = K.name + "@scaled";
    if (K.density) {
        const double f = std::pow(s, -K.d - alpha);
        auto dens = K.density;
        out.density = [dens, f, s](const Vec& h) { return f * dens((1.0 / s) * h); };
    }
    for (auto& L : out.lines) {
        const double f = std::pow(s, -1 - alpha);
        auto rd = L.radial_density;
        L.radial_density = [rd, f, s](double t) { return f * rd(t / s); };
    }
    return out;
}

KernelSpec piecewise_kernel(const std::vector<Ring>& rings, const std::vector<std::vector<double>>& values) {
    if (rings.size() != values.size()) throw ArgumentError("ring/value count mismatch");
    if (rings.empty()) throw ArgumentError("no rings");
    auto data = std::make_shared<std::pair<std::vector<Ring>, std::vector<std::vector<double>>>>(rings, values);
    std::sort(data->first.begin(), data->first.end(), [](const Ring& a, const Ring& b) { return a.r < b.r; });
    // keep values aligned with the sorted rings
    std::vector<std::size_t> idx(rings.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return rings[a].r < rings[b].r; });
    for (std::size_t i = 0; i < idx.size(); ++i) data->second[i] = values[idx[i]];
    KernelSpec K;
    K.d = rings.front().d;
    K.name = "piecewise";
    K.density = [data](const Vec& h) {
        const double rho = norm(h);
        const auto& R = data->first;
        auto it = std::upper_bound(R.begin(), R.end(), rho, [](double v, const Ring& g) { return v < g.r; });
        if (it == R.begin()) return 0.0;
        --it;
        const int c = it->locate(h);
        if (c < 0) return 0.0;
        return data->second[static_cast<std::size_t>(it - R.begin())][c];
    };
    return K;
}

}  // namespace nlreg
