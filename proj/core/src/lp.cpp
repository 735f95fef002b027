#include "nlreg/lp.hpp"

#include <algorithm>
#include <cmath>

#include "nlreg/errors.hpp"

namespace nlreg::lp {

Result minimize(const std::vector<double>& c, const std::vector<std::vector<double>>& A,
                const std::vector<double>& b) {
    const std::size_t m = A.size(), n = c.size();
    if (b.size() != m) throw ArgumentError("lp: row count mismatch");
    for (const auto& row : A)
        if (row.size() != n) throw ArgumentError("lp: column count mismatch");
    for (double v : b)
        if (!(v >= 0)) throw ArgumentError("lp: right-hand side must be nonnegative");

    const std::size_t cols = n + m;
    // rows 0..m-1 constraints, row m objective (reduced costs); last column is the rhs
    std::vector<double> T((m + 1) * (cols + 1), 0.0);
    auto at = [&](std::size_t i, std::size_t j) -> double& { return T[i * (cols + 1) + j]; };
    double scale_a = 0, scale_c = 0;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            at(i, j) = A[i][j];
            scale_a = std::max(scale_a, std::abs(A[i][j]));
        }
        at(i, n + i) = 1.0;
        at(i, cols) = b[i];
    }
    for (std::size_t j = 0; j < n; ++j) {
        at(m, j) = c[j];
        scale_c = std::max(scale_c, std::abs(c[j]));
    }
    std::vector<std::size_t> basis(m);
    for (std::size_t i = 0; i < m; ++i) basis[i] = n + i;

    const double piv_eps = 1e-13 * std::max(scale_a, 1.0);
    const double cost_eps = 1e-15 * std::max(scale_c, 1e-300);
    Result res;
    const int max_iter = 50 * static_cast<int>(cols + 10);
    bool bland = false;
    for (int it = 0;; ++it) {
        if (it > max_iter) throw EvaluationError("lp: iteration limit reached");
        if (it > 5 * static_cast<int>(cols + 10)) bland = true;
        std::size_t enter = cols;
        double best = -cost_eps;
        for (std::size_t j = 0; j < cols; ++j) {
            const double rc = at(m, j);
            if (rc < -cost_eps) {
                if (bland) {
                    enter = j;
                    break;
                }
                if (rc < best) {
                    best = rc;
                    enter = j;
                }
            }
        }
        if (enter == cols) break;
        std::size_t leave = m;
        double ratio = 0;
        for (std::size_t i = 0; i < m; ++i) {
            const double a = at(i, enter);
            if (a > piv_eps) {
                const double r = at(i, cols) / a;
                if (leave == m || r < ratio || (r == ratio && basis[i] < basis[leave])) {
                    ratio = r;
                    leave = i;
                }
            }
        }
        if (leave == m) throw EvaluationError("lp: unbounded program");
        const double p = at(leave, enter);
        for (std::size_t j = 0; j <= cols; ++j) at(leave, j) /= p;
        for (std::size_t i = 0; i <= m; ++i) {
            if (i == leave) continue;
            const double f = at(i, enter);
            if (f == 0.0) continue;
            for (std::size_t j = 0; j <= cols; ++j) at(i, j) -= f * at(leave, j);
            at(i, enter) = 0.0;
        }
        basis[leave] = enter;
        res.iterations = it + 1;
    }
    res.x.assign(n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        if (basis[i] < n) res.x[basis[i]] = std::max(0.0, at(i, cols));
    res.value = 0;
    for (std::size_t j = 0; j < n; ++j) res.value += c[j] * res.x[j];
    return res;
}

}  // namespace nlreg::lp
