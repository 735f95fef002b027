#pragma once
// Functions on R^d: analytic fields and sampled grid functions with a far-field rule.

#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <vector>

#include "nlreg/geometry.hpp"

namespace nlreg {

/// Read-only view of a function on all of R^d.
struct Field {
    int d = 1;
    std::function<double(const Vec&)> value;
    std::function<Vec(const Vec&)> grad;  // optional, central differences otherwise
    std::function<Mat(const Vec&)> hess;  // optional, central differences otherwise
    double fd_step = 1e-4;

    /// When set, the field equals far_value exactly for |y| >= far_radius.
    std::optional<double> far_value;
    double far_radius = std::numeric_limits<double>::infinity();
    /// Optional bound on sup |u| used for tail error bars.
    std::optional<double> sup_bound;

    double operator()(const Vec& x) const { return value(x); }
    Vec gradient(const Vec& x) const;
    Mat hessian(const Vec& x) const;
    Field negated() const;
};

enum class FarFieldMode { constant, analytic, clamp };
enum class GradientMode { central, analytic };

/// Cell-centred samples on [-R,R]^d (node i at -R + (i+1/2) hx) with a rule outside the box.
class GridFunction {
public:
    GridFunction(int d, double R, double hx);

    static GridFunction sample(int d, double R, double hx, const std::function<double(const Vec&)>& f);

    int d() const { return d_; }
    double R() const { return R_; }
    double hx() const { return hx_; }
    int n() const { return n_; }  // nodes per axis
    std::size_t size() const { return values_.size(); }

    std::vector<double>& values() { return values_; }
    const std::vector<double>& values() const { return values_; }
    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }

    Vec node(std::size_t idx) const;
    std::size_t index(int i, int j = 0) const { return d_ == 1 ? std::size_t(i) : std::size_t(j) * n_ + i; }

    void set_far_constant(double c);
    void set_far_analytic(std::function<double(const Vec&)> f, std::optional<double> sup_bound = {});
    void set_far_clamp();
    void set_gradient(std::function<Vec(const Vec&)> g);
    FarFieldMode far_mode() const { return far_mode_; }
    double far_constant() const { return far_const_; }

    /// Interpolated value inside the box, far-field rule outside.
    double operator()(const Vec& x) const;
    bool in_box(const Vec& x) const;

    /// Throws DataError on non-finite values or bad spacing.
    void validate() const;

    Field view() const;

private:
    double interp(const Vec& x) const;

    int d_;
    double R_, hx_;
    int n_;
    std::vector<double> values_;
    FarFieldMode far_mode_ = FarFieldMode::constant;
    double far_const_ = 0.0;
    std::function<double(const Vec&)> far_fn_;
    std::optional<double> far_sup_;
    GradientMode grad_mode_ = GradientMode::central;
    std::function<Vec(const Vec&)> grad_fn_;
};

}  // namespace nlreg
