#include "fsrir/fft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cstring>
#include <map>
#include <mutex>

#include "fsrir/errors.hpp"

namespace fsrir::fft {

namespace {

// FFTW plan creation is not thread-safe; execution of distinct plans is.
// Plans are cached per transform size behind a mutex and executed with
// the new-array interface on per-call buffers.
std::mutex g_plan_mutex;

fftw_plan cached_r2c_plan(int n) {
    static std::map<int, fftw_plan> plans;
    std::lock_guard<std::mutex> lock(g_plan_mutex);
    auto it = plans.find(n);
    if (it != plans.end()) return it->second;
    double* in = fftw_alloc_real(static_cast<size_t>(n));
    fftw_complex* out = fftw_alloc_complex(static_cast<size_t>(n / 2 + 1));
    fftw_plan plan = fftw_plan_dft_r2c_1d(n, in, out, FFTW_ESTIMATE);
    fftw_free(in);
    fftw_free(out);
    plans.emplace(n, plan);
    return plan;
}

fftw_plan cached_c2r_plan(int n) {
    static std::map<int, fftw_plan> plans;
    std::lock_guard<std::mutex> lock(g_plan_mutex);
    auto it = plans.find(n);
    if (it != plans.end()) return it->second;
    fftw_complex* in = fftw_alloc_complex(static_cast<size_t>(n / 2 + 1));
    double* out = fftw_alloc_real(static_cast<size_t>(n));
    fftw_plan plan = fftw_plan_dft_c2r_1d(n, in, out, FFTW_ESTIMATE);
    fftw_free(in);
    fftw_free(out);
    plans.emplace(n, plan);
    return plan;
}

}  // namespace

std::vector<std::complex<double>> rfft(std::span<const double> x, int n) {
    if (n < 1) throw ConfigError("rfft: transform size must be >= 1");
    const int n_bins = n / 2 + 1;
    double* in = fftw_alloc_real(static_cast<size_t>(n));
    fftw_complex* out = fftw_alloc_complex(static_cast<size_t>(n_bins));
    const size_t copy = std::min<size_t>(x.size(), static_cast<size_t>(n));
    std::memcpy(in, x.data(), copy * sizeof(double));
    std::memset(in + copy, 0, (static_cast<size_t>(n) - copy) * sizeof(double));
    fftw_execute_dft_r2c(cached_r2c_plan(n), in, out);
    std::vector<std::complex<double>> spec(static_cast<size_t>(n_bins));
    for (int k = 0; k < n_bins; ++k) {
        spec[static_cast<size_t>(k)] = {out[k][0], out[k][1]};
    }
    fftw_free(in);
    fftw_free(out);
    return spec;
}

std::vector<double> irfft(std::span<const std::complex<double>> spec, int n) {
    if (n < 1) throw ConfigError("irfft: transform size must be >= 1");
    const int n_bins = n / 2 + 1;
    if (spec.size() != static_cast<size_t>(n_bins)) {
        throw ShapeError("irfft: expected n/2 + 1 bins");
    }
    fftw_complex* in = fftw_alloc_complex(static_cast<size_t>(n_bins));
    double* out = fftw_alloc_real(static_cast<size_t>(n));
    for (int k = 0; k < n_bins; ++k) {
        in[k][0] = spec[static_cast<size_t>(k)].real();
        in[k][1] = spec[static_cast<size_t>(k)].imag();
    }
    fftw_execute_dft_c2r(cached_c2r_plan(n), in, out);
    std::vector<double> x(static_cast<size_t>(n));
    const double scale = 1.0 / static_cast<double>(n);
    for (int i = 0; i < n; ++i) x[static_cast<size_t>(i)] = out[i] * scale;
    fftw_free(in);
    fftw_free(out);
    return x;
}

std::vector<double> convolve_full(std::span<const double> a,
                                  std::span<const double> b) {
    if (a.empty() || b.empty()) throw ShapeError("convolve_full: empty input");
    const size_t out_len = a.size() + b.size() - 1;
    int n = 1;
    while (static_cast<size_t>(n) < out_len) n *= 2;
    auto fa = rfft(a, n);
    auto fb = rfft(b, n);
    for (size_t k = 0; k < fa.size(); ++k) fa[k] *= fb[k];
    auto full = irfft(fa, n);
    full.resize(out_len);
    return full;
}

}  // namespace fsrir::fft
