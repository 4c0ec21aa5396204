#pragma once

#include <array>

#include "fsrir/audio.hpp"
#include "fsrir/dsp.hpp"
#include "fsrir/geometry.hpp"

namespace fsrir {

// Schroeder backward-integrated energy per channel, one value per
// spectrogram frame. Nonincreasing and nonnegative by construction.
struct EnergyDecayCurve {
    std::vector<double> values;  // [2][T]
    int n_frames = 0;
    double frame_rate = 0.0;  // frames per second

    double at(int ch, int t) const {
        return values[static_cast<size_t>(ch) * n_frames + t];
    }
};

struct AcousticParams {
    std::array<double, 2> rt60{0.0, 0.0};
    std::array<double, 2> drr{0.0, 0.0};
    std::array<double, 2> edt{0.0, 0.0};
};

// Full-band energy envelope e[t] = sum_f s[f,t]^2 followed by backward
// cumulative summation.
EnergyDecayCurve energy_decay_curve(const Spectrogram& spec);

// RT60 by T20 extrapolation: least-squares line over the [-5, -25] dB
// span of the decay curve, extrapolated to -60 dB. Throws
// InsufficientDecayError when the curve never reaches -25 dB.
std::array<double, 2> rt60(const EnergyDecayCurve& edc);

// Early decay time: line fit over [0, -10] dB, extrapolated to -60 dB.
std::array<double, 2> edt(const EnergyDecayCurve& edc);

// Direct-to-reverberant ratio in dB per channel: energy within
// +-direct_window_ms of the global magnitude peak versus everything
// else, capped to +-80 dB.
std::array<double, 2> drr(const BinauralRir& rir, double direct_window_ms = 2.5);

// Mean absolute difference over all 2 x F x T cells; the same reduction
// as the L1 training loss.
double stft_error(const Spectrogram& pred, const Spectrogram& target);

// |RT60(pred) - RT60(target)| averaged over channels, both measured from
// spectrogram-domain decay curves.
double rte(const Spectrogram& pred_linear, const Spectrogram& target_linear);
double rte(const BinauralRir& pred, const BinauralRir& target, const StftCfg& cfg);

// |DRR(pred) - DRR(target)| in dB averaged over channels.
double drre(const BinauralRir& pred, const BinauralRir& target,
            double direct_window_ms = 2.5);

struct LocalizeCfg {
    double speed_of_sound = 343.0;
    double ear_baseline = 0.18;
    double ear_axis_angle = 0.78539816339744830962;
    double ear_directivity_exponent = 1.0;
    double direct_window_ms = 2.5;
    double noise_floor = 1e-9;
};

// Estimates the world-frame source position from a binaural RIR:
// distance from the mean direct-arrival time, bearing from the
// interaural delay via sin(phi) = c * dtau / baseline, with the
// front/back candidate chosen by the interaural level difference.
std::array<double, 2> localize_source(const BinauralRir& rir,
                                      const Pose& receiver,
                                      const LocalizeCfg& cfg);

}  // namespace fsrir
