#pragma once
// Second-order differences, linear nonlocal operators, extremal operators as per-ring
// linear programs, finite Isaacs operators and first-order drift terms.

#include <optional>
#include <vector>

#include "nlreg/field.hpp"
#include "nlreg/kernel.hpp"

namespace nlreg {

/// Which compensation the difference carries: none (alpha < 1), inside B_1 (alpha = 1), always (alpha > 1).
enum class Regime { sub, critical, super };
Regime regime_for(double alpha);

double delta_h(const Field& u, const Vec& x, const Vec& h, Regime kind);
/// Same with u(x) and grad u(x) supplied by the caller.
double delta_h(const Field& u, const Vec& x, const Vec& h, Regime kind, double u0, const Vec& grad);
double delta_h(const GridFunction& u, const Vec& x, const Vec& h, Regime kind);

enum class Sign { plus, minus };
enum class ExtremalMode { symmetric, general };

/// One ring of the extremal problem: densities k >= 0 per cell, ring mass at most `budget`,
/// a symmetric floor set of measure >= mu |ring| carrying k >= floor_level, first moment within odd_cap.
struct AnnulusProblem {
    int d = 1;
    double r = 1;
    std::vector<Cell> cells;
    std::vector<int> antipode;
    std::vector<double> delta;
    double budget = 0;
    double floor_level = 0;
    double mu = 1;
    double odd_cap = 0;
    double volume = 0;

    static AnnulusProblem build(const Ring& ring, const ClassParams& p, std::vector<double> delta);
    /// Floor pairs needed to reach mu |ring| with equal-volume cells.
    int floor_pairs() const;
    /// Throws ParameterError when the floor alone exceeds the budget, or cells are unpaired.
    void validate() const;
};

struct AnnulusSolution {
    double value = 0;
    std::vector<double> density;   // k per cell
    std::vector<int> floor_cells;  // symmetric floor set, ascending
};

/// Exact optimum of the ring problem (minimum for minus, maximum for plus).
AnnulusSolution solve_annulus(const AnnulusProblem& prob, Sign sign, ExtremalMode mode);

struct ExtremalCertificate {
    std::vector<Ring> rings;
    std::vector<std::vector<double>> densities;
    std::vector<std::vector<int>> floor_sets;
    std::vector<double> ring_values;
    double explicit_total = 0;  // sum of ring_values

    /// The certificate densities as a kernel supported on the explicit rings.
    KernelSpec kernel() const;
    /// Sum over cells of delta * k * vol recomputed from scratch.
    double reintegrate(const Field& u, const Vec& x, Regime kind) const;
};

struct OperatorValue {
    double value = 0;
    double error_bar = 0;
    int ring_count = 0;
    double inner = 0;  // contribution of |h| < r_min
    double tail = 0;   // contribution of |h| >= 2 r_last
};

struct ExtremalResult : OperatorValue {
    ExtremalCertificate certificate;
};

struct EvalOptions {
    double tol = 1e-3;          // AccuracyError above this error bar; <= 0 disables
    int tail_octaves = 60;      // explicit rings beyond the far radius before the geometric closure
    int inner_octaves = 40;     // explicit Taylor rings below r_min (alpha < 1)
    bool keep_certificate = true;
};

OperatorValue eval_linear(const KernelSpec& K, const Field& u, const Vec& x, const AnnulusGrid& quad,
                          double alpha, const EvalOptions& opt = {});
OperatorValue eval_linear(const KernelSpec& K, const GridFunction& u, const Vec& x, const AnnulusGrid& quad,
                          double alpha, const EvalOptions& opt = {});

ExtremalResult eval_extremal(const ClassParams& p, const Field& u, const Vec& x, Sign sign, ExtremalMode mode,
                             const AnnulusGrid& quad, const EvalOptions& opt = {});
ExtremalResult eval_extremal(const ClassParams& p, const GridFunction& u, const Vec& x, Sign sign,
                             ExtremalMode mode, const AnnulusGrid& quad, const EvalOptions& opt = {});

/// inf over i of sup over j of L_{ij} u(x).
double eval_isaacs(const std::vector<std::vector<KernelSpec>>& families, const Field& u, const Vec& x,
                   const AnnulusGrid& quad, double alpha, const EvalOptions& opt = {});

/// Drift either as a fixed vector b or as the ball |b| <= C0.
struct DriftSpec {
    std::optional<Vec> b;
    double C0 = 0;
};

/// b . grad u by upwind differences, or C0 |grad u| with the upwind (Godunov) norm.
double drift_and_gradient(const Field& u, const Vec& x, const DriftSpec& drift, double alpha, double step);
/// Upwind gradient norm sqrt(sum max(D-u,0)^2 + min(D+u,0)^2).
double upwind_gradient_norm(const Field& u, const Vec& x, double step);

struct ClassicalBoundReport {
    double r = 0;          // dyadic radius used in the bound
    double bound = 0;      // bound on |M+ u(x)| and |M- u(x)|
    double plus = 0, minus = 0;
    double error_bar = 0;
    bool pass = false;
};

/// Checks |M^{+-} u(x)| against the explicit bound for |u| <= B and -A I <= D^2 u <= A I.
ClassicalBoundReport classical_bound_check(const ClassParams& p, const Field& u, double A, double B,
                                           const Vec& x, const AnnulusGrid& quad);

/// The explicit bound itself, with r snapped to the ring boundaries r_min 2^k.
double classical_bound(const ClassParams& p, double A, double B, double grad_norm, double r_min, double* r_used);

}  // namespace nlreg
