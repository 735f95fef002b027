#pragma once
// Levy kernels, dyadic ring quadrature and the class assumptions (A1)-(A4).

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "nlreg/geometry.hpp"

namespace nlreg {

struct ClassParams {
    double alpha = 1.5;
    double alpha0 = 0.5;
    double lambda = 0.1;
    double Lambda = 6.0;
    double mu = 0.5;
    double C0 = 0.0;

    /// Throws ParameterError when an invariant is broken.
    void validate() const;

    /// (2-alpha) Lambda r^-alpha, the ring mass budget.
    double budget(double r) const;
    /// (2-alpha) lambda r^{-d-alpha}, the floor density on the ring at r.
    double floor_level(int d, double r) const;
    /// Lambda |1-alpha| r^{1-alpha}, the cap on the ring first moment.
    double odd_cap(double r) const;
};

/// Singular measure carried by the line R*direction with a 1-D density.
struct LineComponent {
    Vec direction{1.0, 0.0};
    std::function<double(double)> radial_density;
};

struct KernelSpec {
    int d = 1;
    std::function<double(const Vec&)> density;  // empty means zero density
    std::vector<LineComponent> lines;
    bool symmetric = false;
    std::string name;

    /// Density at h; throws KernelEvalError for non-finite values.
    double eval(const Vec& h) const;
    /// Checks dimension, line directions and the declared symmetry on samples.
    void validate() const;
};

struct Cell {
    Vec h;
    double vol;
};

/// Cells partitioning B_{2r} \ B_r with an antipodal index map.
struct Ring {
    int d = 1;
    double r = 1.0;
    double volume = 0.0;  // exact measure of the ring
    int n_rad = 0;        // radial cells (per side when d = 1)
    int n_ang = 0;        // angular cells, d = 2 only
    std::vector<Cell> cells;
    std::vector<int> antipode;

    /// Index of the cell containing h, or -1 when h lies outside the ring.
    int locate(const Vec& h) const;
};

/// Signed-radial (d=1) or equal-area polar (d=2) cells on dyadic rings.
class AnnulusGrid {
public:
    AnnulusGrid(int d, double r_min, double r_max, int n_radial = 64, int n_angular = 32,
                double max_cell_width = std::numeric_limits<double>::infinity());

    int d() const { return d_; }
    double r_min() const { return r_min_; }
    double r_max() const { return r_max_; }
    int n_radial() const { return n_radial_; }
    int n_angular() const { return n_angular_; }
    double max_cell_width() const { return max_cell_width_; }
    const std::vector<double>& radii() const { return radii_; }

    /// Cells of B_{2r} \ B_r for an arbitrary r > 0 at this grid's resolution.
    Ring ring(double r) const;
    /// Cells along +-[r,2r) of a line, returned as signed abscissae with lengths.
    std::vector<std::pair<double, double>> line_cells(double r) const;
    /// Same resolution over a different radial range.
    AnnulusGrid with_range(double r_min, double r_max) const;
    /// Same range at doubled radial (and angular) resolution.
    AnnulusGrid refined() const;

private:
    int d_;
    double r_min_, r_max_;
    int n_radial_, n_angular_;
    double max_cell_width_;
    std::vector<double> radii_;
};

/// Rings r_k = 2^k r_min until the last one reaches r_max.
std::vector<double> dyadic_annuli(double r_min, double r_max);

/// Integral of K over B_{2r} \ B_r: cell quadrature plus adaptive Simpson along lines.
double annulus_mass(const KernelSpec& K, double r, const AnnulusGrid& grid);

/// First moment of K over the ring, lines included.
Vec annulus_first_moment(const KernelSpec& K, double r, const AnnulusGrid& grid);

struct RingReport {
    double r = 0;
    bool a1 = true;
    double mass = 0, mass_bound = 0;
    bool a2 = true;
    double floor_measure = 0, floor_required = 0;
    bool a3 = true;
    double odd_norm = 0, odd_bound = 0;
    bool a4 = true;
    std::vector<int> floor_cells;  // indices into the ring's cells
    bool pass() const { return a1 && a2 && a3 && a4; }
};

struct AssumptionReport {
    std::vector<RingReport> rings;
    std::vector<double> sampled_radii;  // the finite dyadic set actually checked
    double tol = 1e-3;
    bool a1 = true, a2 = true, a3 = true, a4 = true;
    bool all_pass() const { return a1 && a2 && a3 && a4; }
};

AssumptionReport check_assumptions(const KernelSpec& K, const ClassParams& p, const AnnulusGrid& grid,
                                   double tol = 1e-3);

/// Explicit dyadic constants C with value <= C * Lambda * r^power.
namespace dyadic_constants {
double second_moment_inner(double alpha);  // r^{2-alpha}
double first_moment_inner(double alpha);   // r^{1-alpha}, alpha < 1
double first_moment_outer(double alpha);   // r^{1-alpha}, alpha > 1
double tail_mass(double alpha);            // r^{-alpha}
}  // namespace dyadic_constants

struct MomentEntry {
    std::string name;
    double value = 0;
    double bound = 0;
    bool applicable = false;
    bool holds() const { return !applicable || value <= bound; }
};

struct MomentBoundsReport {
    double r = 0;
    MomentEntry second_inner, first_inner, first_outer, tail;
    bool all_hold() const {
        return second_inner.holds() && first_inner.holds() && first_outer.holds() && tail.holds();
    }
};

/// Quadrature settings for the moment integrals; rings extend `depth` octaves each way.
struct MomentQuadrature {
    int n_radial = 64;
    int n_angular = 32;
    int depth = 48;
};

double second_moment_inner(const KernelSpec& K, const ClassParams& p, double r, const MomentQuadrature& q = {});
double first_moment_inner(const KernelSpec& K, const ClassParams& p, double r, const MomentQuadrature& q = {});
double first_moment_outer(const KernelSpec& K, const ClassParams& p, double r, const MomentQuadrature& q = {});
double tail_mass(const KernelSpec& K, const ClassParams& p, double r, const MomentQuadrature& q = {});

MomentBoundsReport moment_bounds_report(const KernelSpec& K, const ClassParams& p, double r,
                                        const MomentQuadrature& q = {});

KernelSpec make_frac_laplacian(int d, double alpha, double scale = 1.0);
/// Pure line kernel (2-alpha)|s|^{-1-alpha} along the last coordinate axis.
KernelSpec make_line_kernel(int d, double alpha, double scale = 1.0);
KernelSpec make_line_plus_frac(int d, double alpha);
/// Seeded member of the class with random symmetric floor sets and odd part.
KernelSpec make_random_admissible(const ClassParams& p, std::uint64_t seed, int d = 1);
/// s^{-d-alpha} K(h / s), lines rescaled accordingly.
KernelSpec rescale(const KernelSpec& K, double s, double alpha);
/// Piecewise-constant kernel taking value values[i] on cell i of each ring (used for certificates).
KernelSpec piecewise_kernel(const std::vector<Ring>& rings, const std::vector<std::vector<double>>& values);

}  // namespace nlreg
