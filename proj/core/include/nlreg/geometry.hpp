#pragma once
// Small fixed-size vector helpers; d is 1 or 2 and unused components stay 0.

#include <array>
#include <cmath>
#include <numbers>

namespace nlreg {

using Vec = std::array<double, 2>;
using Mat = std::array<double, 4>;  // row-major 2x2

inline double dot(const Vec& a, const Vec& b) { return a[0] * b[0] + a[1] * b[1]; }
inline double norm(const Vec& a) { return std::hypot(a[0], a[1]); }
inline Vec operator+(const Vec& a, const Vec& b) { return {a[0] + b[0], a[1] + b[1]}; }
inline Vec operator-(const Vec& a, const Vec& b) { return {a[0] - b[0], a[1] - b[1]}; }
inline Vec operator-(const Vec& a) { return {-a[0], -a[1]}; }
inline Vec operator*(double s, const Vec& a) { return {s * a[0], s * a[1]}; }

inline double quad_form(const Mat& m, const Vec& h) {
    return h[0] * (m[0] * h[0] + m[1] * h[1]) + h[1] * (m[2] * h[0] + m[3] * h[1]);
}

/// Lebesgue measure of the unit ball in dimension d (1 or 2).
inline double unit_ball_volume(int d) { return d == 1 ? 2.0 : std::numbers::pi; }

/// Measure of B_{2r} \ B_r.
inline double ring_volume(int d, double r) {
    return unit_ball_volume(d) * (std::pow(2.0 * r, d) - std::pow(r, d));
}

}  // namespace nlreg
