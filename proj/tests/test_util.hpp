#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "couda/autodiff.hpp"
#include "couda/rng.hpp"

namespace couda::test {

// Central finite difference of a scalar function with respect to one
// coordinate of a parameter. The evaluation callback must rebuild the full
// forward computation from the current parameter values.
inline double fd_grad(Parameter& p, int coord, double h, const std::function<double()>& eval) {
    double saved = p.value()[coord];
    p.value()[coord] = saved + h;
    double up = eval();
    p.value()[coord] = saved - h;
    double down = eval();
    p.value()[coord] = saved;
    return (up - down) / (2.0 * h);
}

// Gradient comparison rule used everywhere: relative error 1e-4, falling
// back to absolute error 1e-7 when the analytic gradient is tiny.
inline bool grad_close(double analytic, double numeric) {
    if (std::fabs(analytic) < 1e-3) {
        return std::fabs(analytic - numeric) < 1e-7 + 1e-4 * std::fabs(analytic);
    }
    return std::fabs(analytic - numeric) / std::fabs(analytic) < 1e-4;
}

// Random probability rows for property tests: uniform draws normalized to
// sum 1 (strictly positive with probability one).
inline std::vector<double> random_prob_row(Rng& rng, int k) {
    std::vector<double> row(k);
    double total = 0.0;
    for (auto& v : row) {
        v = rng.uniform(1e-3, 1.0);
        total += v;
    }
    for (auto& v : row) v /= total;
    return row;
}

inline Tensor random_prob_rows(Rng& rng, int n, int k) {
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(n) * k);
    for (int i = 0; i < n; ++i) {
        auto row = random_prob_row(rng, k);
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor({n, k}, std::move(data));
}

inline Tensor random_matrix(Rng& rng, int n, int m, double lo = -1.0, double hi = 1.0) {
    std::vector<double> data(static_cast<std::size_t>(n) * m);
    for (auto& v : data) v = rng.uniform(lo, hi);
    return Tensor({n, m}, std::move(data));
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = std::fabs(a[i] - b[i]);
        if (d > worst) worst = d;
    }
    return worst;
}

}  // namespace couda::test
