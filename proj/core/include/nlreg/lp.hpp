#pragma once
// Dense tableau simplex for small linear programs with an obvious feasible origin.

#include <vector>

namespace nlreg::lp {

struct Result {
    double value = 0;
    std::vector<double> x;
    int iterations = 0;
};

/// Minimizes c.x subject to A x <= b and x >= 0, where every b_i >= 0.
/// Throws EvaluationError when the program is unbounded.
Result minimize(const std::vector<double>& c, const std::vector<std::vector<double>>& A,
                const std::vector<double>& b);

}  // namespace nlreg::lp
