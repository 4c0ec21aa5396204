#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "fsrir/audio.hpp"

namespace fsrir {

// STFT analysis parameters. Framing is centered: the signal is
// zero-padded by fft_size/2 on both sides and frame m is centered on
// sample m * hop, which yields 259 frames for a 1 s signal at the
// defaults below.
struct StftCfg {
    double win_len_ms = 15.5;
    double hop_ms = 3.875;
    int fft_size = 511;
    int sample_rate = 16000;

    int win_samples() const;
    int hop_samples() const;
    int n_bins() const { return fft_size / 2 + 1; }
    int n_frames(size_t signal_len) const;
    double frame_rate() const;  // spectrogram frames per second
    void validate() const;      // throws ConfigError

    bool operator==(const StftCfg&) const = default;
};

// Reduced configuration used by the fast training presets: 64 bins and
// exactly 64 frames for a 0.5 s RIR at 16 kHz.
StftCfg desk_stft_cfg();

enum class SpecDomain { linear, log };

// Two-channel magnitude (or log-magnitude) time-frequency grid, stored
// row-major as [channel][bin][frame].
struct Spectrogram {
    std::vector<double> data;
    int n_bins = 0;
    int n_frames = 0;
    SpecDomain domain = SpecDomain::linear;
    StftCfg cfg;

    size_t size() const { return data.size(); }
    double& at(int c, int f, int t) {
        return data[(static_cast<size_t>(c) * n_bins + f) * n_frames + t];
    }
    double at(int c, int f, int t) const {
        return data[(static_cast<size_t>(c) * n_bins + f) * n_frames + t];
    }
    void require_same_shape(const Spectrogram& other) const;  // ShapeError
};

struct SweepCfg {
    double f_start = 20.0;
    double f_end = 7200.0;
    double duration = 2.0;
    double amplitude = 1.0;
    // Raised-cosine edge tapers; without them the sweep's abrupt ends
    // leave in-band ripple that caps deconvolution accuracy near 38 dB.
    double fade_in_ms = 20.0;
    double fade_out_ms = 5.0;

    void validate(int sample_rate) const;  // throws ConfigError
};

// Exponential sine sweep x(t) = A sin(K (exp(t/L) - 1)) whose
// instantaneous frequency rises from f_start to f_end.
std::vector<double> ess_sweep(const SweepCfg& cfg, int sample_rate);

// Time-reversed, exponentially compensated sweep, scaled so that
// convolve(sweep, inverse) peaks at 1 at sample len(sweep) - 1.
std::vector<double> inverse_filter(std::span<const double> sweep,
                                   const SweepCfg& cfg, int sample_rate);

// Deconvolves a recorded sweep response into an RIR: convolves each
// channel with the inverse filter, aligns at the sweep end, and truncates
// to rir_length seconds.
BinauralRir measure_rir(const BinauralRir& recorded,
                        std::span<const double> sweep, const SweepCfg& cfg,
                        double rir_length_s);

// Per-channel magnitude STFT.
Spectrogram stft_mag(const BinauralRir& rir, const StftCfg& cfg);

// log_mag maps s -> ln(1 + s); exp_mag maps s -> max(exp(s) - 1, 0).
// The pair is exactly inverse on linear magnitudes.
Spectrogram log_mag(const Spectrogram& spec);
Spectrogram exp_mag(const Spectrogram& spec);

// Full linear convolution of a dry signal with both RIR channels.
BinauralRir convolve(std::span<const double> signal, int signal_sample_rate,
                     const BinauralRir& rir);

// Waveform from a linear magnitude spectrogram with all phases set to
// zero: each frame contributes an even kernel centered at the frame
// position. Time structure is quantized to the hop; amplitude is scaled
// to roughly undo the analysis windowing. Used where predictions (which
// carry no phase) must be listened to or localized.
BinauralRir zero_phase_waveform(const Spectrogram& spec, size_t out_len);

// Flat binary tensor persistence ([2, F, T] f32 payload).
void save_spectrogram(const std::filesystem::path& path,
                      const Spectrogram& spec);
Spectrogram load_spectrogram(const std::filesystem::path& path,
                             const StftCfg& cfg, SpecDomain domain);

}  // namespace fsrir
