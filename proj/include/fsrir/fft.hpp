#pragma once

#include <complex>
#include <span>
#include <vector>

namespace fsrir::fft {

// One-sided DFT of a real signal zero-padded/truncated to n points;
// returns n/2 + 1 bins. Any n >= 1 is supported.
std::vector<std::complex<double>> rfft(std::span<const double> x, int n);

// Inverse of rfft: reconstructs n real samples from n/2 + 1 bins,
// normalized so that irfft(rfft(x, n), n) == x.
std::vector<double> irfft(std::span<const std::complex<double>> spec, int n);

// Full linear convolution (length a + b - 1) via zero-padded FFTs.
std::vector<double> convolve_full(std::span<const double> a,
                                  std::span<const double> b);

}  // namespace fsrir::fft
