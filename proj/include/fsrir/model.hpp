#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fsrir/audio.hpp"
#include "fsrir/dsp.hpp"
#include "fsrir/geometry.hpp"
#include "fsrir/nn/graph.hpp"
#include "fsrir/nn/optim.hpp"
#include "fsrir/rng.hpp"

namespace fsrir {

// One element of the few-shot context: what was seen, heard, and where.
struct Observation {
    DepthScan depth;
    BinauralRir echo;
    Pose pose;
};

enum class AblationKind { none, no_echo, no_vision };

struct AblationMask {
    AblationKind kind = AblationKind::none;
    int context_size = 0;  // 0 = use the full observation set
    bool no_ld = false;    // train with lambda_d = 0
};

enum class HeadMode { spectrogram, acoustic_params };

struct ModelConfig {
    int d_model = 128;
    int n_enc_layers = 2;
    int n_dec_layers = 2;
    int n_heads = 4;
    int ffn_hidden = 256;
    double dropout = 0.1;
    int pe_frequencies = 8;   // 16 dims per pose attribute
    int modality_dim = 8;
    int feat_dim = 128;       // width of the depth/echo embeddings
    int obs_encoder_hidden = 128;
    std::vector<int> head_hidden_dims{256};
    int out_bins = 64;
    int out_frames = 64;
    int n_rays = 32;
    int echo_bands = 16;
    int echo_time_bins = 8;
    double depth_scale = 0.1;     // meters -> unit-ish inputs
    double pe_base_freq = 0.125;  // lowest sinusoidal frequency (rad/m)
    HeadMode head_mode = HeadMode::spectrogram;

    int pose_enc_dim() const { return 4 * 2 * pe_frequencies; }
    int query_enc_dim() const { return 6 * 2 * pe_frequencies; }
    int echo_feat_dim() const { return 2 * echo_bands * echo_time_bins; }
    int head_out_dim() const {
        return head_mode == HeadMode::spectrogram ? 2 * out_bins * out_frames : 2;
    }
    void validate() const;  // throws ConfigError
};

// [sin(w_k v), cos(w_k v)] for k = 0..n_freq-1 with w_k = base * 2^k,
// appended per attribute.
std::vector<double> sinusoidal_encode(std::span<const double> attributes,
                                      int n_frequencies, double base_freq);

// Pose offsets enter the encodings as (dx, dy, sin dtheta, cos dtheta);
// the heading is mapped through sin/cos before the sinusoidal encoding to
// stay continuous across the 0/2pi wrap.
std::vector<double> pose_attributes(const PoseOffset& offset);

// Per-channel log energies over a coarse (bands x time-bins) pooling of a
// linear echo spectrogram, flattened to 2*B*K features.
std::vector<double> pooled_log_energies(const Spectrogram& echo_linear,
                                        int bands, int time_bins);

// The Few-ShotRIR predictor: depth/echo encoders, pose and modality
// embeddings, bias-free fusion and query projections, a pre-norm
// transformer encoder over the 2N-token multimodal memory, a conditional
// decoder that cross-attends single query tokens over the encoded
// context, and an MLP head mapping each decoded token to a log-magnitude
// spectrogram (or, for the analytical baseline arm, to RT60/DRR).
template <class T>
class FewShotModel {
public:
    using Graph = nn::Graph<T>;
    using Id = typename Graph::Id;

    FewShotModel(ModelConfig cfg, uint64_t seed);

    const ModelConfig& config() const { return cfg_; }
    nn::ParamStore<T>& params() { return params_; }
    const nn::ParamStore<T>& params() const { return params_; }
    uint64_t init_seed() const { return init_seed_; }

    // Plain feature matrices for one observation set; row order follows
    // the observations, anchored at the first pose.
    struct ContextInputs {
        nn::Tensor<T> depth;     // N x n_rays
        nn::Tensor<T> echo;      // N x echo_feat_dim
        nn::Tensor<T> pose_enc;  // N x pose_enc_dim
        Pose anchor;
        int n = 0;
    };
    ContextInputs make_context_inputs(std::span<const Observation> observations,
                                      const StftCfg& echo_stft) const;

    nn::Tensor<T> make_query_inputs(std::span<const Query> queries,
                                    const Pose& anchor) const;  // M x query_enc_dim

    // Parameter leaves bound into one graph; all builders below require
    // the same bound set.
    struct Bound {
        std::vector<Id> ids;
    };
    Bound bind(Graph& g) const;

    // Multimodal memory S -> encoded context C (tokens x d_model).
    Id encode_context(Graph& g, const Bound& b, const ContextInputs& inputs,
                      const AblationMask& mask, bool train, Rng& rng) const;

    // Decoded head outputs for a batch of independent query tokens.
    Id predict(Graph& g, const Bound& b, Id context, const nn::Tensor<T>& query_inputs,
               bool train, Rng& rng) const;

    // --- eval-mode conveniences -------------------------------------------

    // Spec-level context memory: raw tokens S and encoded representation C.
    struct ContextMemory {
        nn::Tensor<T> tokens;   // S: (tokens x d_model)
        nn::Tensor<T> encoded;  // C: (tokens x d_model)
        Pose anchor;
    };
    ContextMemory encode_context_eval(std::span<const Observation> observations,
                                      const StftCfg& echo_stft,
                                      const AblationMask& mask = {}) const;

    nn::Tensor<T> predict_eval(const ContextMemory& memory,
                               std::span<const Query> queries) const;

    // Log-magnitude spectrogram for a single query (spectrogram head).
    Spectrogram predict_rir(const ContextMemory& memory, const Query& query,
                            const StftCfg& out_cfg) const;

    void save(const std::filesystem::path& path, const std::string& sidecar_json) const;
    void load_tensors(const std::filesystem::path& path);

private:
    Id token_matrix(Graph& g, const Bound& b, const ContextInputs& inputs,
                    const AblationMask& mask) const;
    Id mlp_encoder(Graph& g, const Bound& b, Id input, const char* prefix) const;
    Id transformer_stack(Graph& g, const Bound& b, Id x, Id memory, const char* prefix,
                         int n_layers, bool train, Rng& rng) const;
    int idx(const std::string& name) const;

    ModelConfig cfg_;
    nn::ParamStore<T> params_;
    uint64_t init_seed_ = 0;
};

using FewShotModelF = FewShotModel<float>;
using FewShotModelD = FewShotModel<double>;

}  // namespace fsrir
