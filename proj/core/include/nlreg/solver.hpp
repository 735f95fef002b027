#pragma once
// Monotone explicit time stepping for u_t + b.grad u - L u = f on a lattice, and the
// diagnostics built on recorded trajectories: inf-convolution, measure fractions,
// L^eps norms and oscillation decay fits.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "nlreg/covering.hpp"
#include "nlreg/field.hpp"
#include "nlreg/kernel.hpp"

namespace nlreg {

enum class OperatorKind { linear, kernel_field, extremal_minus, extremal_plus, isaacs };

struct ParabolicProblem {
    OperatorKind op = OperatorKind::linear;
    KernelSpec kernel;                                     // linear
    std::function<KernelSpec(const Vec&)> kernel_field;    // kernel_field, sampled once per node
    std::vector<std::vector<KernelSpec>> isaacs;           // inf over rows of sup over entries
    ClassParams params;                                    // alpha, and the class for extremal stepping

    std::function<Vec(const Vec&)> drift;  // u_t + b . grad u
    /// C0 ball drift for the extremal operators: -C0 |grad u| when sign = +1, +C0 |grad u| when -1.
    double drift_C0 = 0;
    int drift_sign = 1;
    std::function<double(const Vec&, double)> forcing;

    GridFunction initial{1, 2.0, 1.0 / 64};  // its far-field rule is the exterior datum
    double t0 = 0, t1 = 1;
    std::vector<double> record_times;        // empty means every step
    double active_radius = 1.0;              // nodes with |x| < radius evolve, the rest stay fixed
    int subcells = 16;                       // per-axis midpoint subdivision for lattice weights

    /// Throws ParameterError on inconsistent settings (drift with alpha < 1, unbounded data, ...).
    void validate() const;
};

/// Precomputed lattice operator for one problem; step() is pure.
class Stepper {
public:
    explicit Stepper(const ParabolicProblem& prob);
    ~Stepper();
    Stepper(const Stepper&) = delete;
    Stepper& operator=(const Stepper&) = delete;

    /// Largest total coefficient acting on u(x) over active nodes.
    double max_weight() const;
    /// 0.9 / max_weight.
    double cfl_dt() const;
    /// Forward Euler with upwind drift; throws StepError when dt * max_weight > 1.
    GridFunction step(const GridFunction& u, double t, double dt) const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Builds a Stepper and takes one step.
GridFunction step(const ParabolicProblem& prob, const GridFunction& u, double t, double dt);

struct Trajectory {
    std::vector<double> times;
    std::vector<GridFunction> frames;
    double dt = 0;
    double cfl_ratio = 0;  // dt * max_weight

    int d() const { return frames.empty() ? 1 : frames.front().d(); }
    void write_binary(std::ostream& os) const;
    /// Constant far fields round-trip; any other far rule is read back as clamp.
    static Trajectory read_binary(std::istream& is);
};

/// Iterates step() from t0 to t1 with dt = 0.9 / max_weight, recording at the requested times
/// (the step before a record time is shortened to land on it).
Trajectory solve(const ParabolicProblem& prob);

struct InfConvolution {
    GridFunction q;
    std::vector<std::size_t> argmin;  // node index of the minimizer y(x)
};

/// q(x) = min over grid nodes y in the closed unit ball of u(y) + coeff |x - y|^2, at every node x.
/// Ties go to the first minimizer in lexicographic order of (first coordinate, second coordinate).
InfConvolution inf_convolution_q(const GridFunction& u, double coeff = 64);

/// Fraction of Q (raster of grid nodes x nearest recorded times) on which u <= A.
double growth_lemma_measure(const Trajectory& tr, double A, const Cylinder& Q);

/// Fraction of B_{1/8} x (-tau', 0] on which the forward time difference of q is <= A1.
double qt_measure_diagnostic(const Trajectory& tr, double A1, double tau_prime = 0.25, double coeff = 64);

struct LEpsRegion {
    Vec x{0, 0};
    double radius = 0.25;
    double t_lo = -1;
    double t_hi = -0.5;
};

/// (sum of u^eps over the region's space-time cells)^{1/eps}; DataError for u < -1e-12.
double l_eps_norm(const Trajectory& tr, double eps, const LEpsRegion& region);

struct WeakHarnackValue {
    double norm = 0;
    double inf = 0;  // inf of u over Q_{1/4}
    double ratio = 0;
};

/// norm over B_{1/4} x [-1, -2^{-alpha}] divided by (inf over Q_{1/4} + C).
WeakHarnackValue weak_harnack_ratio(const Trajectory& tr, double eps, double alpha, double C = 0);

struct OscProfile {
    std::vector<double> radii;
    std::vector<double> osc;
    double gamma = 0;        // fitted exponent, +inf when every oscillation is zero
    double log_constant = 0;
    double residual = 0;     // RMS of the log-log fit
    bool zero_osc = false;
};

/// osc of u over Q_r(x, t) for each radius, and a least-squares fit of log osc against log r.
OscProfile osc_and_fit(const Trajectory& tr, const SpaceTimePoint& base, const std::vector<double>& radii,
                       double alpha);

/// One seeded run of the regularity diagnostics: a random admissible kernel, nonnegative
/// random initial data, then the growth-lemma fraction, the weak-Harnack ratio and the
/// oscillation fit on the recorded trajectory.
struct RegularityOptions {
    ClassParams params;      // alpha and the class of the random kernel
    double R = 2.0;
    double hx = 1.0 / 64;
    double t0 = -1.5;
    double A = 1.5;          // growth-lemma level, after scaling inf over Q_{1/4} to 1
    double eps = 0.5;
    double C = 0;
    std::vector<double> radii{0.5, 0.25, 0.125, 0.0625};
    int bumps = 3;
    double max_height = 20;
};

struct RegularityRun {
    std::uint64_t seed = 0;
    double growth_fraction = 0;
    WeakHarnackValue harnack;
    OscProfile holder;
    std::size_t steps = 0;
};

RegularityRun regularity_run(const RegularityOptions& opt, std::uint64_t seed);

/// Voronoi weights of the recorded times restricted to (lo, hi].
std::vector<double> time_weights(const std::vector<double>& times, double lo, double hi);

}  // namespace nlreg
