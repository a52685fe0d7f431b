#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "kanfoil/error.hpp"

namespace kanfoil {

/// Dense row-major feature matrix with one real target per row. This is what
/// the models consume; dataio converts airfoil datasets into it.
struct RegressionSet {
    std::vector<std::string> feature_names;
    std::vector<double> x; ///< rows() * dim() values, row-major
    std::vector<double> y;

    RegressionSet() = default;
    RegressionSet(std::vector<std::string> names, std::vector<double> features, std::vector<double> targets)
        : feature_names(std::move(names)), x(std::move(features)), y(std::move(targets)) {
        if (dim() == 0 || x.size() != y.size() * dim()) throw DimensionMismatch(y.size() * dim(), x.size());
    }

    std::size_t dim() const noexcept { return feature_names.size(); }
    std::size_t rows() const noexcept { return y.size(); }
    bool empty() const noexcept { return y.empty(); }

    std::span<const double> row(std::size_t i) const noexcept { return {x.data() + i * dim(), dim()}; }
    std::span<double> row(std::size_t i) noexcept { return {x.data() + i * dim(), dim()}; }

    void push_back(std::span<const double> features, double target) {
        if (features.size() != dim()) throw DimensionMismatch(dim(), features.size());
        x.insert(x.end(), features.begin(), features.end());
        y.push_back(target);
    }

    /// Copy of the rows listed in `indices`, in that order.
    RegressionSet subset(std::span<const std::size_t> indices) const {
        RegressionSet out;
        out.feature_names = feature_names;
        out.x.reserve(indices.size() * dim());
        out.y.reserve(indices.size());
        for (auto i : indices) out.push_back(row(i), y[i]);
        return out;
    }
};

} // namespace kanfoil
