#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace kanfoil {

/// Largest supported polynomial degree. Keeps basis scratch space on the stack.
inline constexpr int kMaxSplineDegree = 8;

/// Uniform knot grid with `intervals` cells on [lo, hi], extended `degree`
/// knots past each end: t_i = lo + i*h for i in [-degree, intervals+degree].
/// `degree` is the polynomial degree, so there are intervals + degree basis
/// functions.
struct KnotGrid {
    int intervals = 6;
    int degree = 2;
    double lo = -1.0;
    double hi = 1.0;

    KnotGrid() = default;
    KnotGrid(int intervals, int degree, double lo = -1.0, double hi = 1.0);

    int basis_count() const noexcept { return intervals + degree; }
    double step() const noexcept { return (hi - lo) / intervals; }
    /// Knot t_i for i in [-degree, intervals + degree].
    double knot(int i) const noexcept { return lo + i * step(); }
    double clamp(double x) const noexcept { return x < lo ? lo : (x > hi ? hi : x); }
    bool contains(double x) const noexcept { return x >= lo && x <= hi; }

    friend bool operator==(const KnotGrid&, const KnotGrid&) = default;
};

/// The degree+1 basis functions that can be nonzero at a point: values for
/// basis indices first .. first+degree (0-based over the grid's basis).
struct LocalBasis {
    int first = 0;
    int count = 0;
    std::array<double, kMaxSplineDegree + 1> value{};
    std::array<double, kMaxSplineDegree + 1> slope{};
    bool clamped = false;
};

/// Nonzero basis values and derivatives at x (clamped into the domain).
LocalBasis local_basis(const KnotGrid& grid, double x) noexcept;

/// Full basis vector of length basis_count() at x (clamped into the domain).
std::vector<double> basis(const KnotGrid& grid, double x);

/// d/dx of every basis function, by degree reduction, at the clamped x.
std::vector<double> basis_derivative(const KnotGrid& grid, double x);

/// sum_i coeffs_i * B_i(x).
double eval_spline(const KnotGrid& grid, std::span<const double> coeffs, double x);

/// Gradient of eval_spline with respect to the coefficients, i.e. basis(grid, x).
std::vector<double> eval_spline_grad_coeffs(const KnotGrid& grid, double x);

/// Least-squares coefficients on `grid` reproducing samples (xs, ys); a small
/// ridge term keeps cells without samples well posed.
std::vector<double> fit_spline_coeffs(const KnotGrid& grid, std::span<const double> xs, std::span<const double> ys,
                                      double ridge = 1e-8);

} // namespace kanfoil
