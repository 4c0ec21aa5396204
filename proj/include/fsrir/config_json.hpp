#pragma once

#include <json.hpp>

#include "fsrir/ism.hpp"
#include "fsrir/losses.hpp"
#include "fsrir/model.hpp"
#include "fsrir/nn/optim.hpp"

namespace fsrir {

using ojson = nlohmann::ordered_json;

inline ojson stft_cfg_to_json(const StftCfg& c) {
    return ojson{{"win_len_ms", c.win_len_ms},
                 {"hop_ms", c.hop_ms},
                 {"fft_size", c.fft_size},
                 {"sample_rate", c.sample_rate}};
}

inline StftCfg stft_cfg_from_json(const ojson& j) {
    StftCfg c;
    c.win_len_ms = j.value("win_len_ms", c.win_len_ms);
    c.hop_ms = j.value("hop_ms", c.hop_ms);
    c.fft_size = j.value("fft_size", c.fft_size);
    c.sample_rate = j.value("sample_rate", c.sample_rate);
    return c;
}

inline ojson sim_cfg_to_json(const SimCfg& c) {
    return ojson{{"max_reflection_order", c.max_reflection_order},
                 {"speed_of_sound", c.speed_of_sound},
                 {"rir_length", c.rir_length},
                 {"sample_rate", c.sample_rate},
                 {"ear_baseline", c.ear_baseline},
                 {"ear_directivity_exponent", c.ear_directivity_exponent},
                 {"ear_axis_angle", c.ear_axis_angle},
                 {"min_distance", c.min_distance}};
}

inline SimCfg sim_cfg_from_json(const ojson& j) {
    SimCfg c;
    c.max_reflection_order = j.value("max_reflection_order", c.max_reflection_order);
    c.speed_of_sound = j.value("speed_of_sound", c.speed_of_sound);
    c.rir_length = j.value("rir_length", c.rir_length);
    c.sample_rate = j.value("sample_rate", c.sample_rate);
    c.ear_baseline = j.value("ear_baseline", c.ear_baseline);
    c.ear_directivity_exponent = j.value("ear_directivity_exponent", c.ear_directivity_exponent);
    c.ear_axis_angle = j.value("ear_axis_angle", c.ear_axis_angle);
    c.min_distance = j.value("min_distance", c.min_distance);
    return c;
}

inline ojson model_config_to_json(const ModelConfig& c) {
    return ojson{{"d_model", c.d_model},
                 {"n_enc_layers", c.n_enc_layers},
                 {"n_dec_layers", c.n_dec_layers},
                 {"n_heads", c.n_heads},
                 {"ffn_hidden", c.ffn_hidden},
                 {"dropout", c.dropout},
                 {"pe_frequencies", c.pe_frequencies},
                 {"modality_dim", c.modality_dim},
                 {"feat_dim", c.feat_dim},
                 {"obs_encoder_hidden", c.obs_encoder_hidden},
                 {"head_hidden_dims", c.head_hidden_dims},
                 {"out_bins", c.out_bins},
                 {"out_frames", c.out_frames},
                 {"n_rays", c.n_rays},
                 {"echo_bands", c.echo_bands},
                 {"echo_time_bins", c.echo_time_bins},
                 {"depth_scale", c.depth_scale},
                 {"pe_base_freq", c.pe_base_freq},
                 {"head_mode", c.head_mode == HeadMode::spectrogram
                                   ? "spectrogram"
                                   : "acoustic_params"}};
}

inline ModelConfig model_config_from_json(const ojson& j) {
    ModelConfig c;
    c.d_model = j.value("d_model", c.d_model);
    c.n_enc_layers = j.value("n_enc_layers", c.n_enc_layers);
    c.n_dec_layers = j.value("n_dec_layers", c.n_dec_layers);
    c.n_heads = j.value("n_heads", c.n_heads);
    c.ffn_hidden = j.value("ffn_hidden", c.ffn_hidden);
    c.dropout = j.value("dropout", c.dropout);
    c.pe_frequencies = j.value("pe_frequencies", c.pe_frequencies);
    c.modality_dim = j.value("modality_dim", c.modality_dim);
    c.feat_dim = j.value("feat_dim", c.feat_dim);
    c.obs_encoder_hidden = j.value("obs_encoder_hidden", c.obs_encoder_hidden);
    c.head_hidden_dims = j.value("head_hidden_dims", c.head_hidden_dims);
    c.out_bins = j.value("out_bins", c.out_bins);
    c.out_frames = j.value("out_frames", c.out_frames);
    c.n_rays = j.value("n_rays", c.n_rays);
    c.echo_bands = j.value("echo_bands", c.echo_bands);
    c.echo_time_bins = j.value("echo_time_bins", c.echo_time_bins);
    c.depth_scale = j.value("depth_scale", c.depth_scale);
    c.pe_base_freq = j.value("pe_base_freq", c.pe_base_freq);
    const std::string mode = j.value("head_mode", std::string("spectrogram"));
    c.head_mode = mode == "acoustic_params" ? HeadMode::acoustic_params
                                            : HeadMode::spectrogram;
    return c;
}

inline ojson loss_cfg_to_json(const LossCfg& c) {
    return ojson{{"lambda_d", c.lambda_d},
                 {"tail_epsilon", c.tail_epsilon},
                 {"l1_domain", c.l1_domain == L1Domain::log ? "log" : "linear"}};
}

inline LossCfg loss_cfg_from_json(const ojson& j) {
    LossCfg c;
    c.lambda_d = j.value("lambda_d", c.lambda_d);
    c.tail_epsilon = j.value("tail_epsilon", c.tail_epsilon);
    c.l1_domain = j.value("l1_domain", std::string("log")) == "linear"
                      ? L1Domain::linear
                      : L1Domain::log;
    return c;
}

inline ojson adam_cfg_to_json(const nn::AdamCfg& c) {
    return ojson{{"lr", c.lr}, {"beta1", c.beta1}, {"beta2", c.beta2}, {"epsilon", c.epsilon}};
}

inline nn::AdamCfg adam_cfg_from_json(const ojson& j) {
    nn::AdamCfg c;
    c.lr = j.value("lr", c.lr);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.epsilon = j.value("epsilon", c.epsilon);
    return c;
}

inline ojson ablation_to_json(const AblationMask& m) {
    const char* kind = m.kind == AblationKind::none      ? "none"
                       : m.kind == AblationKind::no_echo ? "no_echo"
                                                         : "no_vision";
    return ojson{{"kind", kind}, {"context_size", m.context_size}, {"no_ld", m.no_ld}};
}

inline AblationMask ablation_from_json(const ojson& j) {
    AblationMask m;
    const std::string kind = j.value("kind", std::string("none"));
    if (kind == "no_echo") m.kind = AblationKind::no_echo;
    else if (kind == "no_vision") m.kind = AblationKind::no_vision;
    else if (kind == "none") m.kind = AblationKind::none;
    else throw ConfigError("unknown ablation kind: " + kind);
    m.context_size = j.value("context_size", 0);
    m.no_ld = j.value("no_ld", false);
    return m;
}

}  // namespace fsrir
