#pragma once
// The special subsolution: backward ODE profile, truncated parabola, radial bump with a
// quintic bridge, parameter search and pointwise verification of the barrier inequalities.

#include <string>
#include <vector>

#include "nlreg/field.hpp"
#include "nlreg/kernel.hpp"
#include "nlreg/nonlocal_op.hpp"

namespace nlreg {

// ---------------------------------------------------------------------------------------------
// Backward ODE f' = -C1 (f^{1/2} + f^{1-alpha/2}), f(0) = 0.

class OdeProfile {
public:
    OdeProfile() = default;
    OdeProfile(double C1, double alpha, std::vector<double> t, std::vector<double> f);

    double C1() const { return C1_; }
    double alpha() const { return alpha_; }
    double T() const { return t_.front(); }
    const std::vector<double>& times() const { return t_; }    // ascending, last is 0
    const std::vector<double>& values() const { return f_; }

    /// Monotone cubic interpolation; t must lie in [T, 0].
    double operator()(double t) const;
    /// Right-hand side of the ODE evaluated at f(t).
    double derivative(double t) const;

private:
    double C1_ = 0, alpha_ = 1;
    std::vector<double> t_, f_, m_;  // nodes, values, Fritsch-Carlson slopes
};

/// alpha may be 2 here (the closed-form check); t runs backward from 0 to T < 0.
OdeProfile solve_barrier_ode(double C1, double alpha, double T, int samples = 2001);

/// C1 large enough for the truncated parabola max(0, f - 64|x|^2) to be a subsolution.
double truncated_parabola_C1(const ClassParams& p);

struct ParabolaReport {
    double max_residual = 0;
    Vec worst_x{0, 0};
    double worst_t = 0;
    int points = 0;
};

/// max of phi_t + C0 |grad phi| - M^- phi over sampled points where phi > 0.
ParabolaReport truncated_parabola_check(const OdeProfile& f, const ClassParams& p, const AnnulusGrid& grid,
                                        int n_t = 12, int n_x = 9);

// ---------------------------------------------------------------------------------------------
// Bump b(y) = bhat(|y|).

struct BumpSpec {
    double gamma = 0.25;
    double q = 1;
    double c1 = 0.25;

    /// Throws SpecError when parameters are out of range or the bridge is not monotone.
    void validate() const;
};

struct RadialValue {
    double v = 0, d1 = 0, d2 = 0;  // bhat, bhat', bhat''
};

RadialValue bump_radial(const BumpSpec& s, double rho);
double bump(const BumpSpec& s, const Vec& y);
Vec bump_gradient(const BumpSpec& s, const Vec& y, int d);
Mat bump_hessian(const BumpSpec& s, const Vec& y, int d);

/// The bump as a Field. Values are replaced by 0 beyond `cutoff`, which only lowers M^- b.
Field bump_field(const BumpSpec& s, int d, double cutoff = 4.0);

// ---------------------------------------------------------------------------------------------
// Parameter search

struct GeometryCertificate {
    double c1 = 0, c2 = 0, r1 = 0;
    double hit_fraction = 0;   // worst |A cap B_{1-c1}(-x)| / |ring| over the shell
    double cone_fraction = 0;  // worst |A cap {h1^2 >= c2 |h|^2}| / |ring|
};

/// Halves c1 from 1/4 and c2 from 1/2 until both intersection properties hold for every
/// admissible floor set, counted cell by cell on the ring at r1.
GeometryCertificate search_geometry(const ClassParams& p, const AnnulusGrid& grid, double r1 = 0.125);

struct BumpSearchOptions {
    double alpha_q = 1.95;              // order used while doubling q
    std::vector<double> alpha_samples;  // orders checked while halving gamma; empty means {p.alpha}
    int q_max_log2 = 10;
    int gamma_min_log2 = 20;
    int shell_samples = 9;
    double r1 = 0.125;
};

struct ShellPoint {
    Vec x{0, 0};
    double alpha = 0;
    double value = 0;   // M^- b(x)
    double target = 0;  // C q |x|^{-q-alpha}
};

struct BumpSearchResult {
    double gamma1 = 0, q1 = 0, c1 = 0, c2 = 0, r1 = 0;
    double C = 0;
    std::vector<double> alpha_samples;
    std::vector<ShellPoint> shell;  // final verification samples
    int q_steps = 0, gamma_steps = 0;
};

/// Shell points 1 - c1/2 <= |x| <= 1 used by the search and the gamma-ordering check.
std::vector<Vec> shell_points(int d, double c1, int n);

/// M^- b at x using the general extremal problem.
double extremal_minus_bump(const BumpSpec& s, const ClassParams& p, const Vec& x, const AnnulusGrid& grid);

BumpSearchResult search_bump_params(double C, const ClassParams& p, const AnnulusGrid& grid,
                                    const BumpSearchOptions& opt = {});

struct OrderingReport {
    int samples = 0;
    int violations = 0;
    double worst_gap = 0;  // min over samples of M^- b_{gamma'} - M^- b_gamma
};

/// Compares M^- b for gamma' < gamma at every shell sample; the smaller gamma must not lose.
OrderingReport gamma_ordering_check(const BumpSpec& s, double gamma_smaller, const ClassParams& p,
                                    const AnnulusGrid& grid, int shell_samples = 9);

// ---------------------------------------------------------------------------------------------
// The barrier p

struct BarrierParams {
    int d = 1;
    double r = 0.5;
    double alpha = 1.5;
    double C0 = 0;
    double gamma1 = 0.25, q1 = 1, c1 = 0.25, c2 = 0.5;
    double q0 = 1;
    double C5 = 1;
    double eps0 = 0;
    double C = 1;
    double T = 2;  // horizon used for verification and (5.4)
};

class Barrier {
public:
    explicit Barrier(const BarrierParams& bp);

    const BarrierParams& params() const { return bp_; }
    const BumpSpec& bump_spec() const { return spec_; }

    double phi(const Vec& z) const;
    Vec phi_gradient(const Vec& z) const;
    Mat phi_hessian(const Vec& z) const;
    Field phi_field() const;

    /// r^{-2 alpha q0} Phi(0); may overflow for large q0, the barrier itself never does.
    double level() const { return level_; }
    /// Untruncated p~ (raw scale, may overflow).
    double p_tilde(const Vec& x, double t) const;
    /// The normalized truncated barrier; throws DomainError for t <= 0.
    double operator()(const Vec& x, double t) const;
    double p_t(const Vec& x, double t) const;
    Vec p_grad(const Vec& x, double t) const;
    Field slice(double t) const;

    /// p(., t) = c(t) * w(t) * shape_t(.) with c(t) > 0, w(t) = t before r^alpha and 1 after.
    /// shape_t is Phi(r . / t^{1/alpha}) capped at the truncation level, or Phi itself.
    Field shape(double t) const;
    double shape_weight(double t) const;
    /// p_t / c(t) and grad p / c(t), free of the overflow-prone factor c(t).
    double scaled_p_t(const Vec& x, double t) const;
    Vec scaled_p_grad(const Vec& x, double t) const;

private:
    BarrierParams bp_;
    BumpSpec spec_;
    double b_e1_ = 1;
    double level_ = 1;
    double phi0_ = 1;
    double log_r2a_ = 0;  // log r^{2 alpha}

    bool truncated(const Vec& x, double t) const;
    double cap(double t) const;  // truncation level in shape units
};

struct BarrierBuildOptions {
    double margin = 1.5;
    BumpSearchOptions search;
    int interior_samples = 17;
    double T = 2;
};

struct BarrierBuild {
    BarrierParams params;
    BumpSearchResult search;
};

/// Runs the full search: shell constant C, bump, then q0, C5 and eps0.
BarrierBuild build_barrier(double r, const ClassParams& p, const AnnulusGrid& grid,
                           const BarrierBuildOptions& opt = {});

struct ResidualRow {
    Vec x{0, 0};
    double t = 0;
    int branch = 0;  // 1..4 for (5.1)..(5.4)
    double residual = 0;
};

struct BarrierReport {
    double res1 = 0, res2 = 0, res3 = 0, res4 = 0;
    ResidualRow worst1, worst2, worst3, worst4;
    std::vector<ResidualRow> rows;
    double tol = 1e-2;
    bool pass() const { return res1 <= tol && res2 <= tol && res3 <= tol && res4 <= tol; }
};

struct VerifyOptions {
    int n_x = 41;
    int n_t = 24;
    double tol = 1e-2;
    bool throw_on_failure = true;
};

/// Residuals of the four barrier inequalities on a refined space-time sample.
BarrierReport verify_barrier(const BarrierParams& bp, const ClassParams& p, const AnnulusGrid& grid,
                             const VerifyOptions& opt = {});

}  // namespace nlreg
