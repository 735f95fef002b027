#include "nlreg/field.hpp"

#include <algorithm>
#include <cmath>

#include "nlreg/errors.hpp"

namespace nlreg {

Vec Field::gradient(const Vec& x) const {
    if (grad) return grad(x);
    const double e = fd_step;
    Vec g{0, 0};
    for (int k = 0; k < d; ++k) {
        Vec xp = x, xm = x;
        xp[k] += e;
        xm[k] -= e;
        g[k] = (value(xp) - value(xm)) / (2 * e);
    }
    return g;
}

Mat Field::hessian(const Vec& x) const {
    if (hess) return hess(x);
    const double e = fd_step;
    Mat H{0, 0, 0, 0};
    const double u0 = value(x);
    for (int k = 0; k < d; ++k) {
        Vec xp = x, xm = x;
        xp[k] += e;
        xm[k] -= e;
        H[3 * k] = (value(xp) - 2 * u0 + value(xm)) / (e * e);
    }
    if (d == 2) {
        auto v = [&](double a, double b) { return value({x[0] + a, x[1] + b}); };
        const double mixed = (v(e, e) - v(e, -e) - v(-e, e) + v(-e, -e)) / (4 * e * e);
        H[1] = H[2] = mixed;
    }
    return H;
}

Field Field::negated() const {
    Field f = *this;
    auto v = value;
    f.value = [v](const Vec& x) { return -v(x); };
    if (grad) {
        auto g = grad;
        f.grad = [g](const Vec& x) { return -g(x); };
    }
    if (hess) {
        auto h = hess;
        f.hess = [h](const Vec& x) {
            Mat m = h(x);
            for (double& e : m) e = -e;
            return m;
        };
    }
    if (far_value) f.far_value = -*far_value;
    return f;
}

GridFunction::GridFunction(int d, double R, double hx) : d_(d), R_(R), hx_(hx) {
    if (d != 1 && d != 2) throw ArgumentError("grid dimension must be 1 or 2");
    if (!(hx > 0) || !(R > 0)) throw DataError("grid needs positive R and spacing");
    n_ = static_cast<int>(std::lround(2 * R / hx));
    if (n_ < 4 || std::abs(n_ * hx - 2 * R) > 1e-9 * R) throw DataError("2R must be a multiple of hx with >= 4 nodes");
    values_.assign(d == 1 ? std::size_t(n_) : std::size_t(n_) * n_, 0.0);
}

GridFunction GridFunction::sample(int d, double R, double hx, const std::function<double(const Vec&)>& f) {
    GridFunction g(d, R, hx);
    for (std::size_t i = 0; i < g.size(); ++i) g.values_[i] = f(g.node(i));
    return g;
}

Vec GridFunction::node(std::size_t idx) const {
    if (d_ == 1) return {-R_ + (double(idx) + 0.5) * hx_, 0.0};
    const std::size_t i = idx % n_, j = idx / n_;
    return {-R_ + (double(i) + 0.5) * hx_, -R_ + (double(j) + 0.5) * hx_};
}

void GridFunction::set_far_constant(double c) {
    far_mode_ = FarFieldMode::constant;
    far_const_ = c;
}

void GridFunction::set_far_analytic(std::function<double(const Vec&)> f, std::optional<double> sup_bound) {
    far_mode_ = FarFieldMode::analytic;
    far_fn_ = std::move(f);
    far_sup_ = sup_bound;
}

void GridFunction::set_far_clamp() { far_mode_ = FarFieldMode::clamp; }

void GridFunction::set_gradient(std::function<Vec(const Vec&)> g) {
    grad_mode_ = GradientMode::analytic;
    grad_fn_ = std::move(g);
}

bool GridFunction::in_box(const Vec& x) const {
    for (int k = 0; k < d_; ++k)
        if (!(x[k] >= -R_ && x[k] <= R_)) return false;
    return true;
}

namespace {
// Catmull-Rom weights for the four nodes around t in [0,1].
inline void cr_weights(double t, double w[4]) {
    const double t2 = t * t, t3 = t2 * t;
    w[0] = 0.5 * (-t3 + 2 * t2 - t);
    w[1] = 0.5 * (3 * t3 - 5 * t2 + 2);
    w[2] = 0.5 * (-3 * t3 + 4 * t2 + t);
    w[3] = 0.5 * (t3 - t2);
}
}  // namespace

double GridFunction::interp(const Vec& x) const {
    int base[2] = {0, 0};
    double w[2][4] = {};
    for (int k = 0; k < d_; ++k) {
        double s = (x[k] + R_) / hx_ - 0.5;  // fractional node coordinate
        s = std::clamp(s, 0.0, double(n_ - 1));
        int i = std::min(static_cast<int>(std::floor(s)), n_ - 2);
        cr_weights(s - i, w[k]);
        base[k] = i;
    }
    auto at = [&](int i, int j) {
        i = std::clamp(i, 0, n_ - 1);
        j = std::clamp(j, 0, n_ - 1);
        return values_[index(i, j)];
    };
    if (d_ == 1) {
        double v = 0;
        for (int a = 0; a < 4; ++a) v += w[0][a] * at(base[0] - 1 + a, 0);
        return v;
    }
    double v = 0;
    for (int b = 0; b < 4; ++b) {
        double row = 0;
        for (int a = 0; a < 4; ++a) row += w[0][a] * at(base[0] - 1 + a, base[1] - 1 + b);
        v += w[1][b] * row;
    }
    return v;
}

double GridFunction::operator()(const Vec& x) const {
    if (in_box(x)) return interp(x);
    switch (far_mode_) {
        case FarFieldMode::constant:
            return far_const_;
        case FarFieldMode::analytic:
            return far_fn_(x);
        case FarFieldMode::clamp: {
            Vec y = x;
            for (int k = 0; k < d_; ++k) y[k] = std::clamp(y[k], -R_, R_);
            return interp(y);
        }
    }
    return far_const_;
}

void GridFunction::validate() const {
    for (double v : values_)
        if (!std::isfinite(v)) throw DataError("grid function has non-finite values");
    if (far_mode_ == FarFieldMode::analytic && !far_fn_) throw DataError("analytic far field without a function");
}

Field GridFunction::view() const {
    Field f;
    f.d = d_;
    f.fd_step = hx_;
    auto self = std::make_shared<GridFunction>(*this);
    f.value = [self](const Vec& x) { return (*self)(x); };
    if (grad_mode_ == GradientMode::analytic) f.grad = grad_fn_;
    if (far_mode_ == FarFieldMode::constant) {
        f.far_value = far_const_;
        f.far_radius = R_ * std::sqrt(double(d_));
    }
    double sup = 0;
    for (double v : values_) sup = std::max(sup, std::abs(v));
    if (far_mode_ == FarFieldMode::constant)
        f.sup_bound = std::max(sup, std::abs(far_const_));
    else if (far_mode_ == FarFieldMode::clamp)
        f.sup_bound = sup * 1.25;  // Catmull-Rom overshoot is at most 25%
    else if (far_sup_)
        f.sup_bound = std::max(sup * 1.25, *far_sup_);
    return f;
}

}  // namespace nlreg
