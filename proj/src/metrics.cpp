#include "kanfoil/metrics.hpp"

#include <cmath>

#include "kanfoil/error.hpp"

namespace kanfoil {

namespace {

void check_lengths(std::span<const double> pred, std::span<const double> target) {
    if (pred.size() != target.size()) throw DimensionMismatch(target.size(), pred.size());
    if (target.size() < 2) throw InvalidConfig("metrics need at least 2 samples");
}

} // namespace

double mse(std::span<const double> pred, std::span<const double> target) {
    check_lengths(pred, target);
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double r = pred[i] - target[i];
        acc += r * r;
    }
    return acc / static_cast<double>(pred.size());
}

double r2(std::span<const double> pred, std::span<const double> target) {
    check_lengths(pred, target);
    double mean = 0.0;
    for (double t : target) mean += t;
    mean /= static_cast<double>(target.size());
    double ss_tot = 0.0;
    double ss_res = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i) {
        ss_tot += (target[i] - mean) * (target[i] - mean);
        ss_res += (target[i] - pred[i]) * (target[i] - pred[i]);
    }
    if (ss_tot == 0.0) throw ZeroVariance();
    return 1.0 - ss_res / ss_tot;
}

MetricsReport evaluate_predictions(std::span<const double> pred, std::span<const double> target) {
    return {mse(pred, target), r2(pred, target), target.size()};
}

double huber(double residual, double delta) noexcept {
    const double a = std::abs(residual);
    return a <= delta ? 0.5 * residual * residual : delta * (a - 0.5 * delta);
}

double huber_derivative(double residual, double delta) noexcept {
    if (residual > delta) return delta;
    if (residual < -delta) return -delta;
    return residual;
}

} // namespace kanfoil
