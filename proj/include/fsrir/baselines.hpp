#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "fsrir/dsp.hpp"
#include "fsrir/geometry.hpp"

namespace fsrir {

enum class BaselineKind {
    nearest_neighbor,
    linear_interpolation,
    analytical_rir,
};

// What the non-neural baselines see: the context echoes as log
// spectrograms and their poses. They deliberately ignore the query
// source; only the receiver pose enters the neighbor search.
struct BaselineContext {
    std::vector<Spectrogram> echo_log_specs;
    std::vector<Pose> poses;
};

// Echo of the observation closest to the query receiver (planar
// distance); ties break toward the lowest observation index.
Spectrogram nearest_neighbor_predict(const BaselineContext& context,
                                     const Query& query);

struct LinearInterpCfg {
    int top_k = 4;
    bool uniform_weights = false;  // default: inverse-distance weighting
};

// Inverse-distance weighted average of the top-k nearest echoes,
// interpolated in the linear magnitude domain and returned in log.
Spectrogram linear_interp_predict(const BaselineContext& context,
                                  const Query& query,
                                  const LinearInterpCfg& cfg = {});

// Exponentially decaying white noise shaped to a target RT60, with the
// direct window (first 2.5 ms) rescaled to hit a target DRR.
BinauralRir analytical_rir(double target_rt60, double target_drr_db,
                           size_t length, int sample_rate, uint64_t seed);

// Maps a query to (RT60 seconds, DRR dB); either the oracle (true values
// measured from the ground truth) or a trained scalar-head model.
using ParamEstimator = std::function<std::array<double, 2>(const Query&)>;

Spectrogram analytical_rir_plus_predict(const Query& query,
                                        const ParamEstimator& estimator,
                                        const StftCfg& out_cfg,
                                        double rir_length_s, uint64_t seed);

}  // namespace fsrir
