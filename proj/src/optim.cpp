#include "kanfoil/optim.hpp"

#include <cmath>

#include "kanfoil/error.hpp"

namespace kanfoil {

Adam::Adam(std::size_t n, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

void Adam::step(std::span<double> params, std::span<const double> grad) {
    if (params.size() != m_.size() || grad.size() != m_.size()) throw DimensionMismatch(m_.size(), grad.size());
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
        v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
        params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
    }
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

} // namespace

Lbfgs::Lbfgs(std::size_t history, double initial_step) : history_(history), initial_step_(initial_step) {}

bool Lbfgs::step(const Objective& objective, std::vector<double>& x, double& f, std::vector<double>& grad) {
    const std::size_t n = x.size();
    // two-loop recursion for d = -H g
    std::vector<double> d(grad.begin(), grad.end());
    std::vector<double> alpha(s_.size());
    for (std::size_t k = s_.size(); k-- > 0;) {
        alpha[k] = rho_[k] * dot(s_[k], d);
        for (std::size_t i = 0; i < n; ++i) d[i] -= alpha[k] * y_[k][i];
    }
    double gamma = 1.0;
    if (!s_.empty()) gamma = dot(s_.back(), y_.back()) / dot(y_.back(), y_.back());
    for (auto& v : d) v *= gamma;
    for (std::size_t k = 0; k < s_.size(); ++k) {
        const double beta = rho_[k] * dot(y_[k], d);
        for (std::size_t i = 0; i < n; ++i) d[i] += s_[k][i] * (alpha[k] - beta);
    }
    for (auto& v : d) v = -v;

    double slope = dot(grad, d);
    if (!(slope < 0.0)) {
        // not a descent direction; restart from steepest descent
        s_.clear();
        y_.clear();
        rho_.clear();
        for (std::size_t i = 0; i < n; ++i) d[i] = -grad[i];
        slope = -dot(grad, grad);
        if (slope == 0.0) return false;
    }

    double t = s_.empty() ? std::min(1.0, 1.0 / std::sqrt(-slope)) * initial_step_ : initial_step_;
    std::vector<double> x_new(n), g_new(n);
    for (int attempt = 0; attempt < 40; ++attempt, t *= 0.5) {
        for (std::size_t i = 0; i < n; ++i) x_new[i] = x[i] + t * d[i];
        const double f_new = objective(x_new, g_new);
        if (std::isfinite(f_new) && f_new <= f + 1e-4 * t * slope) {
            std::vector<double> s(n), y(n);
            for (std::size_t i = 0; i < n; ++i) {
                s[i] = x_new[i] - x[i];
                y[i] = g_new[i] - grad[i];
            }
            const double sy = dot(s, y);
            if (sy > 1e-12) {
                s_.push_back(std::move(s));
                y_.push_back(std::move(y));
                rho_.push_back(1.0 / sy);
                if (s_.size() > history_) {
                    s_.pop_front();
                    y_.pop_front();
                    rho_.pop_front();
                }
            }
            x.swap(x_new);
            grad.swap(g_new);
            f = f_new;
            return true;
        }
    }
    return false;
}

} // namespace kanfoil
