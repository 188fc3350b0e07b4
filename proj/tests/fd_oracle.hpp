#pragma once

// Central finite-difference oracle used by the gradient tests. It only ever
// evaluates forward values, so it is independent of the backward rules it checks.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace salfield::testing {

inline double fd_derivative(const std::function<double(double)>& f, double x0, double h = 1e-3) {
    return (f(x0 + h) - f(x0 - h)) / (2.0 * h);
}

/// Relative error with an absolute floor for gradients that are both ~0.
inline double rel_err(double analytic, double numeric, double floor = 1e-6) {
    return std::abs(analytic - numeric) / std::max(floor, std::max(std::abs(analytic), std::abs(numeric)));
}

/// Numeric gradient of a scalar function of a parameter vector, central differences.
inline std::vector<double> fd_gradient(const std::function<double(const std::vector<double>&)>& f,
                                       std::vector<double> x, double h = 1e-3) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + h;
        const double fp = f(x);
        x[i] = keep - h;
        const double fm = f(x);
        x[i] = keep;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

}  // namespace salfield::testing
