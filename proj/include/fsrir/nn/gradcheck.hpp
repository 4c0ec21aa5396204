#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "fsrir/nn/optim.hpp"
#include "fsrir/rng.hpp"

namespace fsrir::nn {

struct GradCheckReport {
    double max_rel_err = 0.0;
    size_t checked = 0;
    std::string worst_param;
    int worst_index = -1;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

// loss_fn(params, grads) returns the scalar loss; when grads is non-null
// it must be filled with analytic parameter gradients (aligned with the
// store). The checker compares them against central finite differences
// on a random subsample of entries per tensor.
// The denominator floor blends in an absolute tolerance: it absorbs the
// finite-difference rounding noise (~eps*|f|/h) on entries whose true
// gradient is zero, such as attention key biases.
template <class T>
GradCheckReport gradient_check(
    const std::function<double(ParamStore<T>&, std::vector<Tensor<T>>*)>& loss_fn,
    ParamStore<T>& params, double h, int samples_per_tensor, Rng& rng,
    double denom_floor = 1e-6) {
    std::vector<Tensor<T>> analytic = params.zeros_like();
    (void)loss_fn(params, &analytic);

    GradCheckReport report;
    for (size_t p = 0; p < params.size(); ++p) {
        Tensor<T>& w = params.value(static_cast<int>(p));
        const size_t n = w.data.size();
        if (n == 0) continue;
        for (int s = 0; s < samples_per_tensor; ++s) {
            const size_t j = static_cast<size_t>(rng.uniform_int(n));
            const T saved = w.data[j];
            const double step = h * (1.0 + std::abs(static_cast<double>(saved)));
            w.data[j] = static_cast<T>(static_cast<double>(saved) + step);
            const double f_plus = loss_fn(params, nullptr);
            w.data[j] = static_cast<T>(static_cast<double>(saved) - step);
            const double f_minus = loss_fn(params, nullptr);
            w.data[j] = saved;
            const double numeric = (f_plus - f_minus) / (2.0 * step);
            const double a = static_cast<double>(analytic[p].data[j]);
            const double rel = std::abs(a - numeric) /
                               std::max(denom_floor, std::abs(a) + std::abs(numeric));
            ++report.checked;
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst_param = params.name(static_cast<int>(p));
                report.worst_index = static_cast<int>(j);
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
        }
    }
    return report;
}

// Directional variant: probes each tensor along random Rademacher
// directions and compares the finite-difference directional derivative
// against the analytic projection. Coordinate-wise checks lose precision
// when individual gradient entries are orders of magnitude smaller than
// the loss; the directional derivative aggregates the whole tensor and
// keeps the signal well above the h-limited noise floor.
template <class T>
GradCheckReport gradient_check_directional(
    const std::function<double(ParamStore<T>&, std::vector<Tensor<T>>*)>& loss_fn,
    ParamStore<T>& params, double h, int probes_per_tensor, Rng& rng,
    double denom_floor = 1e-6) {
    std::vector<Tensor<T>> analytic = params.zeros_like();
    (void)loss_fn(params, &analytic);

    GradCheckReport report;
    for (size_t p = 0; p < params.size(); ++p) {
        Tensor<T>& w = params.value(static_cast<int>(p));
        const size_t n = w.data.size();
        if (n == 0) continue;
        const double scale = 1.0 / std::sqrt(static_cast<double>(n));
        for (int s = 0; s < probes_per_tensor; ++s) {
            std::vector<double> direction(n);
            for (double& d : direction) d = (rng.uniform() < 0.5 ? -1.0 : 1.0) * scale;
            const std::vector<T> saved = w.data;
            for (size_t j = 0; j < n; ++j) {
                w.data[j] = static_cast<T>(static_cast<double>(saved[j]) + h * direction[j]);
            }
            const double f_plus = loss_fn(params, nullptr);
            for (size_t j = 0; j < n; ++j) {
                w.data[j] = static_cast<T>(static_cast<double>(saved[j]) - h * direction[j]);
            }
            const double f_minus = loss_fn(params, nullptr);
            w.data = saved;
            const double numeric = (f_plus - f_minus) / (2.0 * h);
            double a = 0.0;
            for (size_t j = 0; j < n; ++j) {
                a += static_cast<double>(analytic[p].data[j]) * direction[j];
            }
            const double rel = std::abs(a - numeric) /
                               std::max(denom_floor, std::abs(a) + std::abs(numeric));
            ++report.checked;
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst_param = params.name(static_cast<int>(p));
                report.worst_index = -1;
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
        }
    }
    return report;
}

}  // namespace fsrir::nn
