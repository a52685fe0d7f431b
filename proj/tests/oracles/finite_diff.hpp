#pragma once

// Central finite differences and the relative error used by gradient checks.

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

namespace oracle {

using ScalarFn = std::function<double(std::span<const double>)>;

inline std::vector<double> central_gradient(const ScalarFn& f, std::vector<double> x, double h = 1e-6) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + h;
        const double up = f(x);
        x[i] = keep - h;
        const double down = f(x);
        x[i] = keep;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

// |a - n| / max(|a|, |n|, floor). The floor keeps near-zero partials from
// turning roundoff (about eps * |f| / h) into a large ratio.
inline double relative_error(double analytic, double numeric, double floor = 1e-4) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

inline double max_relative_error(std::span<const double> analytic, std::span<const double> numeric,
                                 double floor = 1e-4) {
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i)
        worst = std::max(worst, relative_error(analytic[i], numeric[i], floor));
    return worst;
}

} // namespace oracle
