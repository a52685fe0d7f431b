#include "kanfoil/spline.hpp"

#include <cmath>

#include <Eigen/Dense>

#include "kanfoil/error.hpp"

namespace kanfoil {

KnotGrid::KnotGrid(int intervals_, int degree_, double lo_, double hi_)
    : intervals(intervals_), degree(degree_), lo(lo_), hi(hi_) {
    if (intervals < 1) throw InvalidConfig("grid needs at least one interval");
    if (degree < 1 || degree > kMaxSplineDegree)
        throw InvalidConfig("spline degree must be in [1, " + std::to_string(kMaxSplineDegree) + "]");
    if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi)) throw InvalidConfig("grid domain needs lo < hi");
}

LocalBasis local_basis(const KnotGrid& grid, double x) noexcept {
    LocalBasis out;
    const int k = grid.degree;
    out.clamped = !grid.contains(x);
    const double xc = grid.clamp(x);
    const double h = grid.step();

    int m = static_cast<int>(std::floor((xc - grid.lo) / h));
    if (m < 0) m = 0;
    if (m > grid.intervals - 1) m = grid.intervals - 1;

    // Triangular Cox-de Boor on the span [t_m, t_{m+1}); n[r] ends up holding
    // N_{m-j+r, j}. `lower` snapshots degree k-1 for the derivative.
    std::array<double, kMaxSplineDegree + 1> n{};
    std::array<double, kMaxSplineDegree + 1> lower{};
    std::array<double, kMaxSplineDegree + 1> left{};
    std::array<double, kMaxSplineDegree + 1> right{};
    n[0] = 1.0;
    for (int j = 1; j <= k; ++j) {
        if (j == k) lower = n;
        left[j] = xc - grid.knot(m + 1 - j);
        right[j] = grid.knot(m + j) - xc;
        double saved = 0.0;
        for (int r = 0; r < j; ++r) {
            const double denom = right[r + 1] + left[j - r];
            const double temp = denom == 0.0 ? 0.0 : n[r] / denom;
            n[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        n[j] = saved;
    }

    // dN_{i,k}/dx = (N_{i,k-1} - N_{i+1,k-1}) / h on a uniform grid.
    out.first = m;
    out.count = k + 1;
    for (int q = 0; q <= k; ++q) {
        const double a = q >= 1 ? lower[q - 1] : 0.0;
        const double b = q <= k - 1 ? lower[q] : 0.0;
        out.value[q] = n[q];
        out.slope[q] = (a - b) / h;
    }
    return out;
}

std::vector<double> basis(const KnotGrid& grid, double x) {
    std::vector<double> out(grid.basis_count(), 0.0);
    const auto lb = local_basis(grid, x);
    for (int q = 0; q < lb.count; ++q) out[lb.first + q] = lb.value[q];
    return out;
}

std::vector<double> basis_derivative(const KnotGrid& grid, double x) {
    std::vector<double> out(grid.basis_count(), 0.0);
    const auto lb = local_basis(grid, x);
    for (int q = 0; q < lb.count; ++q) out[lb.first + q] = lb.slope[q];
    return out;
}

double eval_spline(const KnotGrid& grid, std::span<const double> coeffs, double x) {
    if (coeffs.size() != static_cast<std::size_t>(grid.basis_count()))
        throw DimensionMismatch(grid.basis_count(), coeffs.size());
    const auto lb = local_basis(grid, x);
    double acc = 0.0;
    for (int q = 0; q < lb.count; ++q) acc += coeffs[lb.first + q] * lb.value[q];
    return acc;
}

std::vector<double> eval_spline_grad_coeffs(const KnotGrid& grid, double x) { return basis(grid, x); }

std::vector<double> fit_spline_coeffs(const KnotGrid& grid, std::span<const double> xs, std::span<const double> ys,
                                      double ridge) {
    if (xs.size() != ys.size()) throw DimensionMismatch(xs.size(), ys.size());
    const int nb = grid.basis_count();
    Eigen::MatrixXd ata = Eigen::MatrixXd::Zero(nb, nb);
    Eigen::VectorXd aty = Eigen::VectorXd::Zero(nb);
    for (std::size_t s = 0; s < xs.size(); ++s) {
        const auto lb = local_basis(grid, xs[s]);
        for (int p = 0; p < lb.count; ++p) {
            aty[lb.first + p] += lb.value[p] * ys[s];
            for (int q = 0; q < lb.count; ++q) ata(lb.first + p, lb.first + q) += lb.value[p] * lb.value[q];
        }
    }
    ata.diagonal().array() += ridge;
    Eigen::VectorXd sol = ata.ldlt().solve(aty);
    return {sol.data(), sol.data() + sol.size()};
}

} // namespace kanfoil
