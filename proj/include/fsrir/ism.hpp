#pragma once

#include <array>
#include <cstdint>

#include "fsrir/audio.hpp"
#include "fsrir/geometry.hpp"

namespace fsrir {

// Image-source simulation parameters. The receiver is a pair of
// directional pickups at +-ear_baseline/2 perpendicular to the heading,
// each with a cardioid-power pattern ((1 + cos a)/2)^exponent whose axis
// is rotated +-ear_axis_angle from the heading (left ear toward the
// left). Distances below min_distance are clamped for both the 1/r
// spreading and the arrival delay, which keeps the co-located echo
// source finite and pins its direct arrival at min_distance/c.
struct SimCfg {
    int max_reflection_order = 20;
    double speed_of_sound = 343.0;
    double rir_length = 0.5;  // seconds
    int sample_rate = 16000;
    double ear_baseline = 0.18;
    double ear_directivity_exponent = 1.0;
    double ear_axis_angle = 0.78539816339744830962;  // pi/4
    double min_distance = 0.1;

    void validate() const;  // throws ConfigError

    bool operator==(const SimCfg&) const = default;
};

// Shoebox binaural RIR by the image-source method: every image source up
// to max_reflection_order contributes a windowed-sinc impulse at delay
// dist/c with amplitude (product of wall reflection coefficients)/dist,
// where the pressure reflection coefficient of a surface with energy
// absorption a is sqrt(1 - a).
BinauralRir simulate_rir(const RoomSpec& room, std::array<double, 2> source,
                         const Pose& receiver, const SimCfg& cfg);

// Echo response: source co-located with the receiver pose.
BinauralRir simulate_echo(const RoomSpec& room, const Pose& pose,
                          const SimCfg& cfg);

enum class NoiseKind { white, band_burst };

// Adds independent noise to both channels, scaled so that
// 10*log10(E_signal / E_noise) equals snr_db over the whole RIR.
// An infinite snr_db disables the noise and returns the input unchanged.
BinauralRir add_ambient_noise(const BinauralRir& echo, NoiseKind kind,
                              double snr_db, uint64_t seed);

}  // namespace fsrir
