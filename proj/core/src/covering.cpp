#include "nlreg/covering.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "nlreg/errors.hpp"
#include "nlreg/parallel.hpp"

namespace nlreg {

double d_alpha(const SpaceTimePoint& a, const SpaceTimePoint& b, double alpha) {
    if (!(alpha > 0 && alpha < 2)) throw ArgumentError("alpha must lie in (0,2)");
    return std::max(std::pow(2 * std::abs(a.t - b.t), 1 / alpha), norm(a.x - b.x));
}

void Cylinder::validate() const {
    if (d != 1 && d != 2) throw ArgumentError("cylinder dimension must be 1 or 2");
    if (!(r > 0)) throw ArgumentError("cylinder radius must be positive");
    if (!(alpha > 0 && alpha < 2)) throw ArgumentError("alpha must lie in (0,2)");
}

bool Cylinder::contains(const Vec& y, double s) const {
    return norm(y - x) < r && s > t - std::pow(r, alpha) && s <= t;
}

double Cylinder::volume() const { return unit_ball_volume(d) * std::pow(r, d) * std::pow(r, alpha); }

Cylinder Cylinder::dilated(double k) const {
    Cylinder c = *this;
    c.r = k * r;
    c.t = center().t + std::pow(c.r, alpha) / 2;
    return c;
}

bool StackedCylinder::contains(const Vec& y, double s) const {
    const double ra = std::pow(base.r, base.alpha);
    return norm(y - base.x) < base.r && s > base.t && s < base.t + m * ra;
}

bool cylinder_is_ball(const Cylinder& Q, int samples, std::uint64_t seed) {
    Q.validate();
    std::mt19937_64 g(seed);
    std::uniform_real_distribution<double> U(-1.5, 1.5);
    const double ra = std::pow(Q.r, Q.alpha);
    const SpaceTimePoint c = Q.center();
    for (int i = 0; i < samples; ++i) {
        Vec y{Q.x[0] + U(g) * Q.r, Q.d == 2 ? Q.x[1] + U(g) * Q.r : 0.0};
        const double s = c.t + U(g) * ra;
        if (s == Q.t) continue;  // the closed top face is the only allowed difference
        const bool in_ball = d_alpha({y, s}, c, Q.alpha) < Q.r;
        if (in_ball != Q.contains(y, s)) return false;
    }
    return true;
}

bool cylinders_intersect(const Cylinder& a, const Cylinder& b) {
    if (norm(a.x - b.x) >= a.r + b.r) return false;
    const double lo = std::max(a.t - std::pow(a.r, a.alpha), b.t - std::pow(b.r, b.alpha));
    const double hi = std::min(a.t, b.t);
    return lo < hi;
}

std::vector<int> vitali_subcover(const std::vector<Cylinder>& cyl) {
    std::vector<int> order(cyl.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int i, int j) { return cyl[i].r > cyl[j].r; });
    std::vector<int> sel;
    for (int i : order) {
        bool free = true;
        for (int j : sel)
            if (cylinders_intersect(cyl[i], cyl[j])) {
                free = false;
                break;
            }
        if (free) sel.push_back(i);
    }
    return sel;
}

// ---------------------------------------------------------------------------------------------

RasterSet::RasterSet(int d, int nx, double t0, double t1, int nt) : d_(d), nx_(nx), nt_(nt), t0_(t0), t1_(t1) {
    if (d != 1 && d != 2) throw ArgumentError("raster dimension must be 1 or 2");
    if (nx < 1 || nt < 1 || !(t1 > t0)) throw ArgumentError("raster needs positive cell counts and t1 > t0");
    flags_.assign(std::size_t(nt) * nx * (d == 2 ? nx : 1), 0);
}

double RasterSet::cell_volume() const {
    const double hx = 2.0 / nx_;
    return std::pow(hx, d_) * (t1_ - t0_) / nt_;
}

SpaceTimePoint RasterSet::center(std::size_t idx) const {
    const std::size_t per = std::size_t(nx_) * (d_ == 2 ? nx_ : 1);
    const std::size_t k = idx / per, s = idx % per;
    const double hx = 2.0 / nx_;
    SpaceTimePoint p;
    p.t = t0_ + (double(k) + 0.5) * (t1_ - t0_) / nt_;
    p.x[0] = -1 + (double(s % nx_) + 0.5) * hx;
    if (d_ == 2) p.x[1] = -1 + (double(s / nx_) + 0.5) * hx;
    return p;
}

void RasterSet::fill(const std::function<bool(const Vec&, double)>& pred) {
    for (std::size_t i = 0; i < flags_.size(); ++i) {
        const auto c = center(i);
        flags_[i] = pred(c.x, c.t) ? 1 : 0;
    }
}

bool RasterSet::same_grid(const RasterSet& o) const {
    return d_ == o.d_ && nx_ == o.nx_ && nt_ == o.nt_ && t0_ == o.t0_ && t1_ == o.t1_;
}

std::size_t RasterSet::count() const { return std::size_t(std::count(flags_.begin(), flags_.end(), 1)); }

double RasterSet::measure_where(const std::function<bool(const Vec&, double)>& pred) const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < flags_.size(); ++i)
        if (flags_[i]) {
            const auto c = center(i);
            if (pred(c.x, c.t)) ++n;
        }
    return double(n) * cell_volume();
}

bool RasterSet::subset_of(const RasterSet& o) const {
    if (!same_grid(o)) throw ArgumentError("rasters live on different grids");
    for (std::size_t i = 0; i < flags_.size(); ++i)
        if (flags_[i] && !o.flags_[i]) return false;
    return true;
}

void RasterSet::for_each_in_box(const Vec& xlo, const Vec& xhi, double tlo, double thi,
                                const std::function<void(std::size_t, const SpaceTimePoint&)>& f) const {
    const double hx = 2.0 / nx_, ht = (t1_ - t0_) / nt_;
    auto range = [](double lo, double hi, double origin, double h, int n) {
        const int a = std::max(0, int(std::ceil((lo - origin) / h - 0.5)));
        const int b = std::min(n - 1, int(std::floor((hi - origin) / h - 0.5)));
        return std::pair<int, int>{a, b};
    };
    const auto [i0, i1] = range(xlo[0], xhi[0], -1.0, hx, nx_);
    const auto [j0, j1] = d_ == 2 ? range(xlo[1], xhi[1], -1.0, hx, nx_) : std::pair<int, int>{0, 0};
    const auto [k0, k1] = range(tlo, thi, t0_, ht, nt_);
    const std::size_t per = std::size_t(nx_) * (d_ == 2 ? nx_ : 1);
    for (int k = k0; k <= k1; ++k)
        for (int j = j0; j <= j1; ++j)
            for (int i = i0; i <= i1; ++i) {
                const std::size_t idx = std::size_t(k) * per + std::size_t(j) * nx_ + std::size_t(i);
                f(idx, center(idx));
            }
}

void RasterSet::for_each_in(const Cylinder& Q, const std::function<void(std::size_t)>& f, double m) const {
    const double ra = std::pow(Q.r, Q.alpha);
    const Vec lo{Q.x[0] - Q.r, Q.x[1] - Q.r}, hi{Q.x[0] + Q.r, Q.x[1] + Q.r};
    if (m > 0) {
        const StackedCylinder S{Q, m};
        for_each_in_box(lo, hi, Q.t, Q.t + m * ra, [&](std::size_t i, const SpaceTimePoint& c) {
            if (S.contains(c.x, c.t)) f(i);
        });
    } else {
        for_each_in_box(lo, hi, Q.t - ra, Q.t, [&](std::size_t i, const SpaceTimePoint& c) {
            if (Q.contains(c.x, c.t)) f(i);
        });
    }
}

void RasterSet::write_csv(std::ostream& os) const {
    os << "cell,flag\n";
    for (std::size_t i = 0; i < flags_.size(); ++i) os << i << ',' << int(flags_[i]) << '\n';
}

RasterSet RasterSet::read_csv(std::istream& is, int d, int nx, double t0, double t1, int nt) {
    RasterSet R(d, nx, t0, t1, nt);
    std::string line;
    if (!std::getline(is, line) || line != "cell,flag") throw DataError("raster CSV must start with 'cell,flag'");
    std::size_t rows = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::size_t idx;
        char comma;
        int flag;
        if (!(ls >> idx >> comma >> flag) || comma != ',' || (flag != 0 && flag != 1))
            throw DataError("bad raster row: " + line);
        if (idx >= R.size()) throw DataError("raster cell index out of range");
        R.flags_[idx] = std::uint8_t(flag);
        ++rows;
    }
    if (rows != R.size()) throw DataError("raster CSV has the wrong number of rows");
    return R;
}

// ---------------------------------------------------------------------------------------------

VitaliCheck vitali_cover_check(const std::vector<Cylinder>& cyl, const RasterSet& grid) {
    VitaliCheck out;
    out.selected = vitali_subcover(cyl);
    for (std::size_t a = 0; a < out.selected.size(); ++a)
        for (std::size_t b = a + 1; b < out.selected.size(); ++b)
            if (cylinders_intersect(cyl[out.selected[a]], cyl[out.selected[b]])) out.disjoint = false;
    std::vector<std::uint8_t> fam(grid.size(), 0), cov(grid.size(), 0);
    for (const Cylinder& q : cyl) grid.for_each_in(q, [&](std::size_t i) { fam[i] = 1; });
    for (int i : out.selected) grid.for_each_in(cyl[i].dilated(5), [&](std::size_t j) { cov[j] = 1; });
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (!fam[i]) continue;
        ++out.covered_cells;
        if (!cov[i]) ++out.missed_cells;
    }
    return out;
}

InkSpotsReport ink_spots_check(const RasterSet& E, const RasterSet& F, double mu, double m,
                               const std::vector<Cylinder>& probes) {
    if (!E.same_grid(F)) throw ArgumentError("E and F live on different grids");
    if (!(mu > 0 && mu < 1) || !(m > 0)) throw ArgumentError("need 0 < mu < 1 and m > 0");
    InkSpotsReport rep;
    rep.c = std::pow(5.0, -E.d() - (probes.empty() ? 1.0 : probes.front().alpha));
    rep.E = E.measure();
    rep.F = F.measure();
    if (!E.subset_of(F)) {
        rep.hypothesis_1 = false;
        rep.failure = "E is not contained in F";
        return rep;
    }
    for (std::size_t i = 0; i < F.size(); ++i)
        if (F[i] && !(norm(F.center(i).x) < 0.5)) {
            rep.hypothesis_1 = false;
            rep.failure = "F leaves B_1/2";
            return rep;
        }
    // Raster counts of Q and E cap Q per probe.
    std::vector<std::size_t> qn(probes.size()), en(probes.size());
    for (std::size_t k = 0; k < probes.size(); ++k) {
        const Cylinder& Q = probes[k];
        Q.validate();
        if (norm(Q.x) + Q.r > 1 + 1e-12) {
            rep.hypothesis_1 = false;
            rep.failure = "probe " + std::to_string(k) + " leaves B_1";
            return rep;
        }
        E.for_each_in(Q, [&](std::size_t i) {
            ++qn[k];
            if (E[i]) ++en[k];
        });
    }
    auto dense = [&](std::size_t k) { return double(en[k]) > (1 - mu) * double(qn[k]); };
    std::vector<std::uint8_t> reached(F.size(), 0);
    for (std::size_t k = 0; k < probes.size(); ++k)
        if (!dense(k)) F.for_each_in(probes[k], [&](std::size_t i) { reached[i] = 1; });
    for (std::size_t i = 0; i < F.size(); ++i)
        if (F[i] && !reached[i]) {
            rep.hypothesis_1 = false;
            rep.failure = "F cell " + std::to_string(i) + " has no admissible probe";
            break;
        }
    for (std::size_t k = 0; k < probes.size() && rep.hypothesis_2; ++k) {
        if (!dense(k)) continue;
        if (probes[k].t + m * std::pow(probes[k].r, probes[k].alpha) > F.t1()) {
            rep.hypothesis_2 = false;
            rep.failure = "stack of probe " + std::to_string(k) + " leaves the raster window";
            break;
        }
        F.for_each_in(probes[k], [&](std::size_t i) {
            if (!F[i] && rep.hypothesis_2) {
                rep.hypothesis_2 = false;
                rep.failure = "stack of probe " + std::to_string(k) + " is not inside F";
            }
        }, m);
    }
    rep.rhs = (m + 1) / m * (1 - rep.c * mu) * rep.F;
    if (rep.hypothesis_1 && rep.hypothesis_2) rep.conclusion = rep.E <= rep.rhs;
    return rep;
}

InkSpotsInstance make_ink_spots_instance(int d, double alpha, double mu, double m, int nx, int nt,
                                         double e_radius, double t_lo, double t_hi) {
    InkSpotsInstance out{RasterSet(d, nx, 0.0, 1.0, nt), RasterSet(d, nx, 0.0, 1.0, nt), {}, mu, m};
    out.E.fill([&](const Vec& x, double t) { return norm(x) < e_radius && t > t_lo && t < t_hi; });
    for (double r : {0.25, 0.125, 0.0625}) {
        const double step = r / 2, tr = std::pow(r, alpha);
        const int kx = int(std::floor((1 - r) / step + 1e-9));
        for (int j = (d == 2 ? -kx : 0); j <= (d == 2 ? kx : 0); ++j)
            for (int i = -kx; i <= kx; ++i) {
                const Vec x{i * step, j * step};
                if (norm(x) + r > 1 + 1e-12) continue;
                for (double t = tr; t + m * tr <= 1 + 1e-12; t += tr / 2) out.probes.push_back({d, x, t, r, alpha});
            }
    }
    out.F = out.E;
    for (const Cylinder& Q : out.probes) {
        std::size_t qn = 0, en = 0;
        out.E.for_each_in(Q, [&](std::size_t i) {
            ++qn;
            if (out.E[i]) ++en;
        });
        if (double(en) > (1 - mu) * double(qn)) out.F.for_each_in(Q, [&](std::size_t i) { out.F.set(i, true); }, m);
    }
    for (std::size_t i = 0; i < out.F.size(); ++i)
        if (out.F[i] && !(norm(out.F.center(i).x) < 0.5)) throw DomainError("synthetic F leaves B_1/2");
    return out;
}

double union_length(std::vector<std::pair<double, double>> iv) {
    std::sort(iv.begin(), iv.end());
    double total = 0, lo = 0, hi = 0;
    bool open = false;
    for (const auto& [a, b] : iv) {
        if (!(b > a)) continue;
        if (!open || a > hi) {
            if (open) total += hi - lo;
            lo = a;
            hi = b;
            open = true;
        } else {
            hi = std::max(hi, b);
        }
    }
    if (open) total += hi - lo;
    return total;
}

IntervalLemmaResult interval_lemma_check(const std::vector<double>& a, const std::vector<double>& h, double m) {
    if (a.size() != h.size()) throw ArgumentError("a and h must have the same length");
    if (!(m > 0)) throw ArgumentError("m must be positive");
    std::vector<std::pair<double, double>> L, R;
    for (std::size_t k = 0; k < a.size(); ++k) {
        if (!(h[k] > 0)) throw ArgumentError("interval lengths h must be positive");
        L.emplace_back(a[k], a[k] + (m + 1) * h[k]);
        R.emplace_back(a[k] + h[k], a[k] + (m + 1) * h[k]);
    }
    IntervalLemmaResult res;
    res.lhs = union_length(L);
    res.rhs = union_length(R);
    res.pass = res.lhs <= (m + 1) / m * res.rhs * (1 + 1e-12);
    return res;
}

}  // namespace nlreg
