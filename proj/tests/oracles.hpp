#pragma once
// Reference computations used by the tests. None of them call into the library's
// numerical routines; they only read plain data out of library structs.

#include <algorithm>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <limits>
#include <numbers>
#include <utility>
#include <vector>

#include "nlreg/geometry.hpp"
#include "nlreg/nonlocal_op.hpp"

namespace oracle {

/// (2-alpha) * integral over R of (cos h - 1) |h|^{-1-alpha} dh, by Gauss-Kronrod on
/// 2 pi periods plus the leading tail term.
inline double frac_laplacian_of_cos_at_zero(double alpha, int periods = 4096) {
    using boost::math::quadrature::gauss_kronrod;
    // 1 - cos h = 2 sin^2(h/2) avoids cancellation near 0.
    auto f = [alpha](double h) {
        if (h == 0) return alpha == 1 ? -0.5 : 0.0;
        const double s = std::sin(h / 2);
        return -2 * s * s * std::pow(h, -1 - alpha);
    };
    double total = 0;
    const double period = 2 * std::numbers::pi;
    for (int k = 0; k < periods; ++k)
        total += gauss_kronrod<double, 61>::integrate(f, k * period, (k + 1) * period, 15, 1e-13);
    // Beyond A the integrand averages to -|h|^{-1-alpha}; the oscillating rest is O(A^{-2-alpha}).
    const double A = periods * period;
    total += -std::pow(A, -alpha) / alpha;
    return (2 - alpha) * 2 * total;
}

/// The four dyadic constants as explicit partial sums of their geometric series.
struct DyadicSeries {
    double second_inner = 0, first_inner = 0, first_outer = 0, tail = 0;
};

inline DyadicSeries dyadic_series(double alpha, int terms = 400) {
    DyadicSeries s;
    for (int k = 1; k <= terms; ++k) {
        // Ring at r 2^-k: |h|^2 <= (2 r_k)^2, mass <= (2-alpha) r_k^{-alpha}.
        const double rk = std::ldexp(1.0, -k);
        s.second_inner += (2 - alpha) * 4 * std::pow(rk, 2 - alpha);
        if (alpha < 1) s.first_inner += std::abs(1 - alpha) * std::pow(rk, 1 - alpha);
    }
    for (int k = 0; k < terms; ++k) {
        const double rk = std::ldexp(1.0, k);
        if (alpha > 1) s.first_outer += std::abs(1 - alpha) * std::pow(rk, 1 - alpha);
        s.tail += (2 - alpha) * std::pow(rk, -alpha);
    }
    return s;
}

/// Length of a union of intervals by sweeping sorted endpoints.
inline double union_length(std::vector<std::pair<double, double>> iv) {
    std::sort(iv.begin(), iv.end());
    double total = 0, lo = 0, hi = -std::numeric_limits<double>::infinity();
    for (const auto& [a, b] : iv) {
        if (a > hi) {
            if (hi > lo) total += hi - lo;
            lo = a;
            hi = b;
        } else {
            hi = std::max(hi, b);
        }
    }
    if (hi > lo) total += hi - lo;
    return total;
}

// ---------------------------------------------------------------------------------------------
// Vertex enumeration for min c.y subject to G y <= g, y >= 0 (bounded feasible set assumed).

inline bool solve_square(std::vector<std::vector<double>> A, std::vector<double> b, std::vector<double>& x) {
    const std::size_t n = b.size();
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(A[r][col]) > std::abs(A[piv][col])) piv = r;
        if (std::abs(A[piv][col]) < 1e-12) return false;
        std::swap(A[piv], A[col]);
        std::swap(b[piv], b[col]);
        for (std::size_t r = 0; r < n; ++r) {
            if (r == col) continue;
            const double f = A[r][col] / A[col][col];
            for (std::size_t c = col; c < n; ++c) A[r][c] -= f * A[col][c];
            b[r] -= f * b[col];
        }
    }
    x.resize(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = b[i] / A[i][i];
    return true;
}

inline double vertex_minimum(const std::vector<double>& c, const std::vector<std::vector<double>>& G,
                             const std::vector<double>& g) {
    const std::size_t n = c.size();
    std::vector<std::vector<double>> rows(G);
    std::vector<double> rhs(g);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> e(n, 0.0);
        e[i] = -1;
        rows.push_back(e);
        rhs.push_back(0);
    }
    const std::size_t m = rows.size();
    double best = std::numeric_limits<double>::infinity();
    std::vector<int> pick(m, 0);
    std::fill(pick.end() - long(n), pick.end(), 1);
    do {
        std::vector<std::vector<double>> A;
        std::vector<double> b;
        for (std::size_t i = 0; i < m; ++i)
            if (pick[i]) {
                A.push_back(rows[i]);
                b.push_back(rhs[i]);
            }
        std::vector<double> y;
        if (!solve_square(A, b, y)) continue;
        bool feasible = true;
        for (std::size_t i = 0; i < m && feasible; ++i) {
            double lhs = 0, scale = std::abs(rhs[i]);
            for (std::size_t j = 0; j < n; ++j) {
                lhs += rows[i][j] * y[j];
                scale = std::max(scale, std::abs(rows[i][j] * y[j]));
            }
            feasible = lhs <= rhs[i] + 1e-10 * std::max(1.0, scale);
        }
        if (!feasible) continue;
        double v = 0;
        for (std::size_t j = 0; j < n; ++j) v += c[j] * y[j];
        best = std::min(best, v);
    } while (std::next_permutation(pick.begin(), pick.end()));
    return best;
}

/// Extremal value of one d = 1 ring (any mode) or d = 2 ring (symmetric mode) by trying every
/// symmetric floor set of sufficient measure and every vertex of the remaining polytope.
inline double ring_extremum(const nlreg::AnnulusProblem& P, nlreg::Sign sign, nlreg::ExtremalMode mode) {
    const std::size_t n = P.cells.size();
    std::vector<double> dl(P.delta);
    if (sign == nlreg::Sign::plus)
        for (double& v : dl) v = -v;
    std::vector<int> lo;
    for (std::size_t c = 0; c < n; ++c)
        if (int(c) < P.antipode[c]) lo.push_back(int(c));
    const std::size_t np = lo.size();

    double best = std::numeric_limits<double>::infinity();
    for (unsigned mask = 0; mask < (1u << np); ++mask) {
        double floor_vol = 0, floor_value = 0;
        for (std::size_t p = 0; p < np; ++p)
            if (mask >> p & 1)
                for (int c : {lo[p], P.antipode[lo[p]]}) {
                    floor_vol += P.cells[c].vol;
                    floor_value += P.floor_level * dl[c] * P.cells[c].vol;
                }
        if (floor_vol < P.mu * P.volume * (1 - 1e-9)) continue;
        const double rest = P.budget - P.floor_level * floor_vol;
        if (rest < 0) continue;

        double v;
        if (mode == nlreg::ExtremalMode::symmetric) {
            // Mass z_p split evenly over a pair.
            std::vector<double> c(np);
            for (std::size_t p = 0; p < np; ++p) c[p] = 0.5 * (dl[lo[p]] + dl[P.antipode[lo[p]]]);
            v = vertex_minimum(c, {std::vector<double>(np, 1.0)}, {rest});
        } else {
            std::vector<double> mom(n), neg(n);
            for (std::size_t c = 0; c < n; ++c) {
                mom[c] = P.cells[c].h[0];
                neg[c] = -mom[c];
            }
            v = vertex_minimum(dl, {std::vector<double>(n, 1.0), mom, neg}, {rest, P.odd_cap, P.odd_cap});
        }
        best = std::min(best, floor_value + v);
    }
    return sign == nlreg::Sign::plus ? -best : best;
}

}  // namespace oracle
