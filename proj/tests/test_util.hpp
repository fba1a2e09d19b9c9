#pragma once

#include <cmath>
#include <cstring>
#include <functional>
#include <vector>

#include "surfcast/common.hpp"

namespace testutil {

inline std::vector<double> randv(surfcast::Rng& rng, std::size_t n, double scale = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal() * scale;
    return v;
}

inline bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (std::memcmp(&a[i], &b[i], sizeof(double)) != 0) return false;
    }
    return true;
}

// Central finite differences of f at x against an analytic gradient on
// n_probe randomly chosen coordinates; returns the worst relative error.
inline double fd_max_rel_err(const std::function<double(const std::vector<double>&)>& f,
                             std::vector<double> x, const std::vector<double>& grad, int n_probe,
                             surfcast::Rng& rng, double h = 1e-6) {
    double worst = 0.0;
    for (int p = 0; p < n_probe; ++p) {
        const std::size_t i = rng.uniform_int(x.size());
        const double orig = x[i];
        x[i] = orig + h;
        const double fp = f(x);
        x[i] = orig - h;
        const double fm = f(x);
        x[i] = orig;
        const double fd = (fp - fm) / (2.0 * h);
        const double denom = std::max({std::fabs(fd), std::fabs(grad[i]), 1e-7});
        worst = std::max(worst, std::fabs(fd - grad[i]) / denom);
    }
    return worst;
}

}  // namespace testutil
