#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fsrir/dataset.hpp"
#include "fsrir/losses.hpp"
#include "fsrir/model.hpp"
#include "fsrir/nn/optim.hpp"

namespace fsrir {

struct TrainCfg {
    int steps = 2000;
    int batch_contexts = 24;       // contexts per optimizer step
    int queries_per_context = 60;  // query group per context
    nn::AdamCfg adam;
    LossCfg loss;
    uint64_t seed = 1;
    int log_every = 25;
    std::string precision = "f32";  // "f32" for training, "f64" for checking
};

struct LossCurvePoint {
    int step = 0;
    double total = 0.0;
    double l1 = 0.0;
    double l_d = 0.0;
};

struct TrainResult {
    std::filesystem::path checkpoint;
    std::vector<LossCurvePoint> curve;
    int steps_run = 0;
    bool aborted_on_nan = false;
};

// Trains on the train-split queries of seen rooms. Writes the checkpoint
// (parameters plus optimizer state), a JSON sidecar, and the loss-curve
// CSV under out_dir. Fully deterministic from cfg.seed. Passing a
// resume_from checkpoint continues a previous run up to cfg.steps total.
TrainResult train_model(const DatasetManifest& manifest, const ModelConfig& model_cfg,
                        const TrainCfg& cfg, const AblationMask& ablation,
                        const std::filesystem::path& out_dir,
                        const std::filesystem::path& resume_from = {});

// Model output shape implied by a dataset's STFT and RIR length.
void fit_output_shape(ModelConfig& cfg, const DatasetManifest& manifest);

}  // namespace fsrir
