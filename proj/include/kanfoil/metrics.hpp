#pragma once

#include <cstddef>
#include <span>

namespace kanfoil {

struct MetricsReport {
    double mse = 0.0;
    double r2 = 0.0;
    std::size_t n = 0;
};

/// Mean squared error. Lengths must match and be >= 2.
double mse(std::span<const double> pred, std::span<const double> target);

/// Coefficient of determination 1 - SS_res / SS_tot. May be negative.
/// Throws ZeroVariance when the target is constant.
double r2(std::span<const double> pred, std::span<const double> target);

MetricsReport evaluate_predictions(std::span<const double> pred, std::span<const double> target);

/// Huber loss of a single residual: quadratic inside |r| <= delta, linear beyond.
double huber(double residual, double delta) noexcept;
double huber_derivative(double residual, double delta) noexcept;

} // namespace kanfoil
