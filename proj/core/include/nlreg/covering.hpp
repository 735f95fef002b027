#pragma once
// Parabolic geometry: the metric d_alpha, cylinders and their time stacks, a Vitali
// subcover, raster sets, the ink-spots measure inequality and the 1-D interval lemma.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "nlreg/geometry.hpp"

namespace nlreg {

struct SpaceTimePoint {
    Vec x{0, 0};
    double t = 0;
};

/// max((2|t0-t1|)^{1/alpha}, |x0-x1|). A metric for alpha >= 1, a quasi-metric below.
double d_alpha(const SpaceTimePoint& a, const SpaceTimePoint& b, double alpha);

/// B_r(x) x (t - r^alpha, t].
struct Cylinder {
    int d = 1;
    Vec x{0, 0};
    double t = 0;
    double r = 1;
    double alpha = 1;

    void validate() const;
    bool contains(const Vec& y, double s) const;
    double volume() const;
    /// Centre of the cylinder seen as a d_alpha ball.
    SpaceTimePoint center() const { return {x, t - std::pow(r, alpha) / 2}; }
    /// Same centre, radius k r.
    Cylinder dilated(double k) const;
};

/// B_r(x) x (t, t + m r^alpha), stacked on top of `base`.
struct StackedCylinder {
    Cylinder base;
    double m = 1;

    bool contains(const Vec& y, double s) const;
    double volume() const { return m * base.volume(); }
};

/// Compares membership with the d_alpha ball around the centre on random samples, top face excluded.
bool cylinder_is_ball(const Cylinder& Q, int samples = 4096, std::uint64_t seed = 1);

/// True when the two point sets share a point.
bool cylinders_intersect(const Cylinder& a, const Cylinder& b);

/// Greedy selection by decreasing radius (input order breaks ties); returns indices.
std::vector<int> vitali_subcover(const std::vector<Cylinder>& cyl);

/// Uniform space-time raster over [-1,1]^d x [t0,t1] with cell-centre membership.
class RasterSet {
public:
    RasterSet(int d, int nx, double t0, double t1, int nt);

    int d() const { return d_; }
    int nx() const { return nx_; }
    int nt() const { return nt_; }
    double t0() const { return t0_; }
    double t1() const { return t1_; }
    std::size_t size() const { return flags_.size(); }
    double cell_volume() const;

    SpaceTimePoint center(std::size_t idx) const;
    bool operator[](std::size_t i) const { return flags_[i] != 0; }
    void set(std::size_t i, bool v) { flags_[i] = v ? 1 : 0; }
    void fill(const std::function<bool(const Vec&, double)>& pred);
    bool same_grid(const RasterSet& o) const;

    std::size_t count() const;
    double measure() const { return double(count()) * cell_volume(); }
    /// Cells that lie in the set and satisfy pred.
    double measure_where(const std::function<bool(const Vec&, double)>& pred) const;
    bool subset_of(const RasterSet& o) const;
    /// Visits the cells whose centres lie in the closed box [xlo, xhi] x [tlo, thi].
    void for_each_in_box(const Vec& xlo, const Vec& xhi, double tlo, double thi,
                         const std::function<void(std::size_t, const SpaceTimePoint&)>& f) const;
    /// Visits the cells whose centres lie in Q (or in the m-stack above Q when m > 0).
    void for_each_in(const Cylinder& Q, const std::function<void(std::size_t)>& f, double m = 0) const;

    void write_csv(std::ostream& os) const;
    /// Reads "cell,flag" rows into a raster of the given shape; throws DataError on bad input.
    static RasterSet read_csv(std::istream& is, int d, int nx, double t0, double t1, int nt);

private:
    int d_, nx_, nt_;
    double t0_, t1_;
    std::vector<std::uint8_t> flags_;
};

struct VitaliCheck {
    std::vector<int> selected;
    bool disjoint = true;
    std::size_t covered_cells = 0;  // raster cells in the union of the family
    std::size_t missed_cells = 0;   // of those, cells outside every 5-dilation
    bool pass() const { return disjoint && missed_cells == 0; }
};

/// Runs the subcover and checks the 5-dilation property cell by cell on `grid`.
VitaliCheck vitali_cover_check(const std::vector<Cylinder>& cyl, const RasterSet& grid);

struct InkSpotsReport {
    bool hypothesis_1 = true;  // every F cell lies in a probe with |E cap Q| <= (1-mu)|Q|
    bool hypothesis_2 = true;  // every probe with |E cap Q| > (1-mu)|Q| has its stack inside F
    double E = 0, F = 0;
    double c = 0;
    double rhs = 0;            // (m+1)/m (1 - c mu) |F|
    bool conclusion = false;
    std::string failure;
    bool pass() const { return hypothesis_1 && hypothesis_2 && conclusion; }
};

/// Checks the two hypotheses against the probe family, then the measure inequality
/// with c = 5^{-d-alpha}. The conclusion is only asserted when both hypotheses hold.
InkSpotsReport ink_spots_check(const RasterSet& E, const RasterSet& F, double mu, double m,
                               const std::vector<Cylinder>& probes);

struct InkSpotsInstance {
    RasterSet E, F;
    std::vector<Cylinder> probes;
    double mu = 0.5, m = 1;
};

/// E = B_e x (t_lo, t_hi) on a raster over [-1,1]^d x [0,1]; probes are cylinders of radius
/// 1/4, 1/8, 1/16 on a half-radius lattice inside B_1; F is E plus the m-stacks of every probe
/// in which E is denser than 1 - mu. Throws DomainError when F leaves B_{1/2}.
InkSpotsInstance make_ink_spots_instance(int d, double alpha, double mu, double m, int nx, int nt,
                                         double e_radius = 0.1, double t_lo = 0.2, double t_hi = 0.3);

struct IntervalLemmaResult {
    double lhs = 0, rhs = 0;
    bool pass = true;
};

/// lhs = |U (a_k, a_k + (m+1) h_k)|, rhs = |U (a_k + h_k, a_k + (m+1) h_k)|;
/// pass iff lhs <= (m+1)/m rhs.
IntervalLemmaResult interval_lemma_check(const std::vector<double>& a, const std::vector<double>& h, double m);

/// Length of a union of open intervals.
double union_length(std::vector<std::pair<double, double>> iv);

}  // namespace nlreg
