#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fsrir/analysis.hpp"
#include "fsrir/config_json.hpp"
#include "fsrir/dataset.hpp"
#include "fsrir/train.hpp"

namespace fsrir {

// One JSON document with sections mirroring the module configs;
// environment variables with the FSRIR_ prefix override single keys
// (FSRIR_train__steps=500 sets train.steps).
struct HarnessConfig {
    RenderCfg render;
    SimCfg sim;
    StftCfg stft;
    ModelConfig model;
    TrainCfg train;

    static HarnessConfig from_json(const ojson& j);
    static HarnessConfig from_file(const std::filesystem::path& path,
                                   bool apply_env = true);
    ojson to_json() const;
};

void apply_env_overrides(ojson& j, const std::string& prefix = "FSRIR");

enum class PredictorKind {
    model,
    ground_truth,
    nearest_neighbor,
    linear_interpolation,
    analytical_oracle,
    analytical_learned,
};

PredictorKind predictor_kind_from_string(const std::string& name);

struct EvalSpec {
    PredictorKind kind = PredictorKind::model;
    std::filesystem::path checkpoint;  // model / analytical_learned arms
    std::string split = "all";         // all | seen | unseen
    int context_size = 0;              // 0 = full observation sets
    uint64_t seed = 0;                 // noise seed for the analytical arm
};

struct EvalRow {
    std::string split;
    std::string room_id;
    std::string context_id;
    std::string query_id;
    double stft = 0.0;
    double rte = 0.0;
    double drre = 0.0;
    double sle = 0.0;
    bool rte_valid = false;
    bool sle_valid = false;
};

struct SplitAggregate {
    double stft = 0.0;
    double rte = 0.0;
    double drre = 0.0;
    double sle = 0.0;
    size_t n = 0;
    size_t rte_n = 0;
    size_t sle_n = 0;
};

struct EvalReport {
    std::vector<EvalRow> rows;
    std::map<std::string, SplitAggregate> aggregates;
    uint64_t checkpoint_hash = 0;
    uint64_t seed = 0;
    ojson metadata;

    std::string to_csv() const;
    ojson to_json() const;
};

// Predictions for every test query of one context, as log spectrograms.
// Reads ground-truth RIRs only for the two arms defined by them
// (ground_truth and analytical_oracle); the learned paths never touch
// query RIR files.
struct ContextPredictions {
    const RoomRecord* room = nullptr;
    const ContextRecord* context = nullptr;
    std::vector<const QueryRecord*> queries;
    std::vector<Spectrogram> predictions;
};
std::vector<ContextPredictions> predict_all(const DatasetManifest& manifest,
                                            const EvalSpec& spec);

EvalReport run_eval(const DatasetManifest& manifest, const EvalSpec& spec);

void write_eval_outputs(const EvalReport& report,
                        const std::filesystem::path& out_dir);

// Grid of (source x, source y, stft error) for a fixed receiver; min/max
// rows are embedded as CSV comments for plotting.
std::string error_map_csv(const DatasetManifest& manifest,
                          const std::filesystem::path& checkpoint,
                          const std::string& room_id, const std::string& context_id,
                          const Pose& receiver, double grid_step);

struct SweepResult {
    int context_size = 0;
    uint64_t seed = 0;
    std::map<std::string, double> mean_stft;  // per split
};
std::vector<SweepResult> sweep_context(const DatasetManifest& manifest,
                                       const HarnessConfig& cfg,
                                       const std::vector<int>& sizes,
                                       const std::vector<uint64_t>& seeds,
                                       const std::filesystem::path& out_dir);
std::string sweep_csv(const std::vector<SweepResult>& results);

// Finite-difference verification of the loss and model gradients at f64.
struct GradCheckSummary {
    double l1_max_rel_err = 0.0;
    double decay_max_rel_err = 0.0;
    double model_max_rel_err = 0.0;
    int instances = 0;

    double worst() const;
};
GradCheckSummary run_gradient_checks(uint64_t seed, int l1_instances = 40,
                                     int decay_instances = 40,
                                     int model_instances = 20);

// Exclusive ownership of a run directory via an O_EXCL lock file.
class RunLock {
public:
    explicit RunLock(const std::filesystem::path& dir);
    ~RunLock();
    RunLock(const RunLock&) = delete;
    RunLock& operator=(const RunLock&) = delete;

private:
    std::filesystem::path path_;
};

// Loads the model checkpoint for evaluation, refusing on config mismatch
// with a diff of the two configs.
template <class T>
FewShotModel<T> load_eval_model(const std::filesystem::path& checkpoint,
                                const DatasetManifest& manifest,
                                AblationMask* trained_ablation = nullptr);

}  // namespace fsrir
