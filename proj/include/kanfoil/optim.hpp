#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <vector>

namespace kanfoil {

/// Adam with bias correction, operating on flat parameter vectors.
class Adam {
public:
    Adam(std::size_t n, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    void step(std::span<double> params, std::span<const double> grad);
    std::size_t iterations() const noexcept { return t_; }

private:
    double lr_, beta1_, beta2_, eps_;
    std::size_t t_ = 0;
    std::vector<double> m_, v_;
};

/// Objective returning f(x) and writing its gradient.
using Objective = std::function<double(std::span<const double> x, std::vector<double>& grad)>;

/// Limited-memory BFGS with a backtracking Armijo line search. One call to
/// step() performs one quasi-Newton iteration.
class Lbfgs {
public:
    explicit Lbfgs(std::size_t history = 10, double initial_step = 1.0);

    /// Updates x in place; `f` and `grad` hold the objective at x on entry and
    /// at the new x on return. Returns false when no descent step was found.
    bool step(const Objective& objective, std::vector<double>& x, double& f, std::vector<double>& grad);

private:
    std::size_t history_;
    double initial_step_;
    std::deque<std::vector<double>> s_, y_;
    std::deque<double> rho_;
};

} // namespace kanfoil
