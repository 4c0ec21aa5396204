#include "fsrir/model.hpp"

#include <algorithm>
#include <cmath>

#include "fsrir/errors.hpp"
#include "fsrir/io.hpp"

namespace fsrir {

void ModelConfig::validate() const {
    if (d_model <= 0 || n_heads <= 0 || d_model % n_heads != 0) {
        throw ConfigError("model: d_model must be positive and divisible by n_heads");
    }
    if (n_enc_layers < 1 || n_dec_layers < 1) {
        throw ConfigError("model: need at least one encoder and decoder layer");
    }
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("model: dropout must be in [0, 1)");
    if (pe_frequencies < 1) throw ConfigError("model: pe_frequencies must be >= 1");
    if (modality_dim < 1) throw ConfigError("model: modality_dim must be >= 1");
    if (out_bins < 1 || out_frames < 1) throw ConfigError("model: output shape must be positive");
    if (n_rays < 2) throw ConfigError("model: n_rays must be >= 2");
    if (echo_bands < 1 || echo_time_bins < 1) {
        throw ConfigError("model: echo pooling grid must be positive");
    }
}

std::vector<double> sinusoidal_encode(std::span<const double> attributes,
                                      int n_frequencies, double base_freq) {
    std::vector<double> out;
    out.reserve(attributes.size() * 2 * static_cast<size_t>(n_frequencies));
    for (double v : attributes) {
        if (!std::isfinite(v)) throw ConfigError("sinusoidal_encode: non-finite attribute");
        double w = base_freq;
        for (int k = 0; k < n_frequencies; ++k) {
            out.push_back(std::sin(w * v));
            out.push_back(std::cos(w * v));
            w *= 2.0;
        }
    }
    return out;
}

std::vector<double> pose_attributes(const PoseOffset& offset) {
    return {offset.dx, offset.dy, std::sin(offset.dtheta), std::cos(offset.dtheta)};
}

std::vector<double> pooled_log_energies(const Spectrogram& echo_linear,
                                        int bands, int time_bins) {
    if (echo_linear.domain != SpecDomain::linear) {
        throw DomainError("pooled_log_energies expects linear magnitudes");
    }
    if (echo_linear.n_bins < bands || echo_linear.n_frames < time_bins) {
        throw ShapeError("pooled_log_energies: spectrogram smaller than the pooling grid");
    }
    std::vector<double> out;
    out.reserve(2ull * bands * time_bins);
    for (int ch = 0; ch < 2; ++ch) {
        for (int b = 0; b < bands; ++b) {
            const int f0 = b * echo_linear.n_bins / bands;
            const int f1 = (b + 1) * echo_linear.n_bins / bands;
            for (int k = 0; k < time_bins; ++k) {
                const int t0 = k * echo_linear.n_frames / time_bins;
                const int t1 = (k + 1) * echo_linear.n_frames / time_bins;
                double acc = 0.0;
                for (int f = f0; f < f1; ++f) {
                    for (int t = t0; t < t1; ++t) {
                        const double s = echo_linear.at(ch, f, t);
                        acc += s * s;
                    }
                }
                const double cells = static_cast<double>((f1 - f0) * (t1 - t0));
                out.push_back(std::log1p(acc / cells));
            }
        }
    }
    return out;
}

namespace {

template <class T>
nn::Tensor<T> to_tensor(std::vector<int> shape, const std::vector<double>& vals) {
    nn::Tensor<T> t(std::move(shape));
    if (t.numel() != vals.size()) throw ShapeError("feature size mismatch");
    for (size_t i = 0; i < vals.size(); ++i) t.data[i] = static_cast<T>(vals[i]);
    return t;
}

}  // namespace

template <class T>
FewShotModel<T>::FewShotModel(ModelConfig cfg, uint64_t seed)
    : cfg_(std::move(cfg)), init_seed_(seed) {
    cfg_.validate();
    Rng rng(derive_seed(seed, {0x696e6974ULL}));

    auto glorot = [&rng](int fan_in, int fan_out) {
        nn::Tensor<T> w({fan_in, fan_out});
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        for (T& v : w.data) v = static_cast<T>(rng.uniform(-limit, limit));
        return w;
    };
    auto zeros1 = [](int n) { return nn::Tensor<T>({n}); };
    auto ones1 = [](int n) {
        nn::Tensor<T> t({n});
        for (T& v : t.data) v = T(1);
        return t;
    };

    const int d = cfg_.d_model;
    params_.add("depth_enc.w1", glorot(cfg_.n_rays, cfg_.obs_encoder_hidden));
    params_.add("depth_enc.b1", zeros1(cfg_.obs_encoder_hidden));
    params_.add("depth_enc.w2", glorot(cfg_.obs_encoder_hidden, cfg_.feat_dim));
    params_.add("depth_enc.b2", zeros1(cfg_.feat_dim));
    params_.add("echo_enc.w1", glorot(cfg_.echo_feat_dim(), cfg_.obs_encoder_hidden));
    params_.add("echo_enc.b1", zeros1(cfg_.obs_encoder_hidden));
    params_.add("echo_enc.w2", glorot(cfg_.obs_encoder_hidden, cfg_.feat_dim));
    params_.add("echo_enc.b2", zeros1(cfg_.feat_dim));

    nn::Tensor<T> modality({2, cfg_.modality_dim});
    for (T& v : modality.data) v = static_cast<T>(rng.normal() * 0.5);
    params_.add("modality.table", modality);

    const int fused_in = cfg_.feat_dim + cfg_.pose_enc_dim() + cfg_.modality_dim;
    params_.add("fusion.visual", glorot(fused_in, d));
    params_.add("fusion.acoustic", glorot(fused_in, d));
    params_.add("query.proj", glorot(cfg_.query_enc_dim(), d));

    auto add_transformer = [&](const std::string& prefix, int layers) {
        for (int i = 0; i < layers; ++i) {
            const std::string base = prefix + std::to_string(i);
            params_.add(base + ".ln1.g", ones1(d));
            params_.add(base + ".ln1.b", zeros1(d));
            params_.add(base + ".attn.wq", glorot(d, d));
            params_.add(base + ".attn.bq", zeros1(d));
            params_.add(base + ".attn.wk", glorot(d, d));
            params_.add(base + ".attn.bk", zeros1(d));
            params_.add(base + ".attn.wv", glorot(d, d));
            params_.add(base + ".attn.bv", zeros1(d));
            params_.add(base + ".attn.wo", glorot(d, d));
            params_.add(base + ".attn.bo", zeros1(d));
            params_.add(base + ".ln2.g", ones1(d));
            params_.add(base + ".ln2.b", zeros1(d));
            params_.add(base + ".ffn.w1", glorot(d, cfg_.ffn_hidden));
            params_.add(base + ".ffn.b1", zeros1(cfg_.ffn_hidden));
            params_.add(base + ".ffn.w2", glorot(cfg_.ffn_hidden, d));
            params_.add(base + ".ffn.b2", zeros1(d));
        }
        params_.add(prefix + "final_ln.g", ones1(d));
        params_.add(prefix + "final_ln.b", zeros1(d));
    };
    add_transformer("enc", cfg_.n_enc_layers);
    add_transformer("dec", cfg_.n_dec_layers);

    int width = d;
    for (size_t i = 0; i < cfg_.head_hidden_dims.size(); ++i) {
        const int next = cfg_.head_hidden_dims[i];
        params_.add("head.w" + std::to_string(i), glorot(width, next));
        width = next;
    }
    // The final head layer starts at zero so initial predictions are
    // exact silence in log magnitudes.
    params_.add("head.w_out", nn::Tensor<T>({width, cfg_.head_out_dim()}));
}

template <class T>
int FewShotModel<T>::idx(const std::string& name) const {
    for (size_t i = 0; i < params_.size(); ++i) {
        if (params_.name(static_cast<int>(i)) == name) return static_cast<int>(i);
    }
    throw ConfigError("unknown parameter: " + name);
}

template <class T>
typename FewShotModel<T>::Bound FewShotModel<T>::bind(Graph& g) const {
    Bound b;
    b.ids.reserve(params_.size());
    for (size_t i = 0; i < params_.size(); ++i) {
        b.ids.push_back(g.leaf_ref(&params_.value(static_cast<int>(i))));
    }
    return b;
}

template <class T>
typename FewShotModel<T>::ContextInputs FewShotModel<T>::make_context_inputs(
    std::span<const Observation> observations, const StftCfg& echo_stft) const {
    if (observations.empty()) throw ConfigError("context must contain at least one observation");
    const int n = static_cast<int>(observations.size());
    ContextInputs inputs;
    inputs.n = n;
    inputs.anchor = observations[0].pose;
    inputs.depth = nn::Tensor<T>({n, cfg_.n_rays});
    inputs.echo = nn::Tensor<T>({n, cfg_.echo_feat_dim()});
    inputs.pose_enc = nn::Tensor<T>({n, cfg_.pose_enc_dim()});
    for (int i = 0; i < n; ++i) {
        const Observation& obs = observations[static_cast<size_t>(i)];
        if (static_cast<int>(obs.depth.ranges.size()) != cfg_.n_rays) {
            throw ShapeError("observation depth scan does not match the configured ray count");
        }
        for (int r = 0; r < cfg_.n_rays; ++r) {
            inputs.depth.at(i, r) = static_cast<T>(obs.depth.ranges[static_cast<size_t>(r)] *
                                                   cfg_.depth_scale);
        }
        const auto echo_feats = pooled_log_energies(stft_mag(obs.echo, echo_stft),
                                                    cfg_.echo_bands, cfg_.echo_time_bins);
        for (int c = 0; c < cfg_.echo_feat_dim(); ++c) {
            inputs.echo.at(i, c) = static_cast<T>(echo_feats[static_cast<size_t>(c)]);
        }
        const auto enc = sinusoidal_encode(
            pose_attributes(normalize_pose(obs.pose, inputs.anchor)),
            cfg_.pe_frequencies, cfg_.pe_base_freq);
        for (int c = 0; c < cfg_.pose_enc_dim(); ++c) {
            inputs.pose_enc.at(i, c) = static_cast<T>(enc[static_cast<size_t>(c)]);
        }
    }
    return inputs;
}

template <class T>
nn::Tensor<T> FewShotModel<T>::make_query_inputs(std::span<const Query> queries,
                                                 const Pose& anchor) const {
    const int m = static_cast<int>(queries.size());
    nn::Tensor<T> out({m, cfg_.query_enc_dim()});
    for (int i = 0; i < m; ++i) {
        const Query& q = queries[static_cast<size_t>(i)];
        const PoseOffset src =
            normalize_pose(Pose{q.source[0], q.source[1], 0.0}, anchor);
        const std::vector<double> src_attrs{src.dx, src.dy};
        const auto src_enc =
            sinusoidal_encode(src_attrs, cfg_.pe_frequencies, cfg_.pe_base_freq);
        const auto rcv_enc = sinusoidal_encode(
            pose_attributes(normalize_pose(q.receiver, anchor)), cfg_.pe_frequencies,
            cfg_.pe_base_freq);
        int c = 0;
        for (double v : src_enc) out.at(i, c++) = static_cast<T>(v);
        for (double v : rcv_enc) out.at(i, c++) = static_cast<T>(v);
    }
    return out;
}

template <class T>
typename FewShotModel<T>::Id FewShotModel<T>::mlp_encoder(Graph& g, const Bound& b,
                                                          Id input,
                                                          const char* prefix) const {
    const std::string p(prefix);
    const Id h = g.relu(g.add(g.matmul(input, b.ids[static_cast<size_t>(idx(p + ".w1"))]),
                              b.ids[static_cast<size_t>(idx(p + ".b1"))]));
    return g.add(g.matmul(h, b.ids[static_cast<size_t>(idx(p + ".w2"))]),
                 b.ids[static_cast<size_t>(idx(p + ".b2"))]);
}

template <class T>
typename FewShotModel<T>::Id FewShotModel<T>::token_matrix(
    Graph& g, const Bound& b, const ContextInputs& inputs,
    const AblationMask& mask) const {
    int n = inputs.n;
    if (mask.context_size > 0) n = std::min(n, mask.context_size);
    if (n < 1) throw ConfigError("encode_context: empty context");

    auto truncate = [&](const nn::Tensor<T>& t) {
        if (n == inputs.n) return t;
        nn::Tensor<T> cut({n, t.dim(1)});
        std::copy(t.data.begin(),
                  t.data.begin() + static_cast<size_t>(n) * t.dim(1), cut.data.begin());
        return cut;
    };

    const Id pose = g.constant(truncate(inputs.pose_enc));
    std::vector<Id> token_blocks;
    if (mask.kind != AblationKind::no_vision) {
        const Id depth_in = g.constant(truncate(inputs.depth));
        const Id visual = mlp_encoder(g, b, depth_in, "depth_enc");
        const Id m_v = g.repeat_rows(
            g.embedding(b.ids[static_cast<size_t>(idx("modality.table"))], {0}), n);
        const Id fused = g.concat_cols({visual, pose, m_v});
        token_blocks.push_back(
            g.matmul(fused, b.ids[static_cast<size_t>(idx("fusion.visual"))]));
    }
    if (mask.kind != AblationKind::no_echo) {
        const Id echo_in = g.constant(truncate(inputs.echo));
        const Id acoustic = mlp_encoder(g, b, echo_in, "echo_enc");
        const Id m_a = g.repeat_rows(
            g.embedding(b.ids[static_cast<size_t>(idx("modality.table"))], {1}), n);
        const Id fused = g.concat_cols({acoustic, pose, m_a});
        token_blocks.push_back(
            g.matmul(fused, b.ids[static_cast<size_t>(idx("fusion.acoustic"))]));
    }
    if (token_blocks.empty()) throw ConfigError("ablation removed both modalities");
    return token_blocks.size() == 1 ? token_blocks[0] : g.concat_rows(token_blocks);
}

template <class T>
typename FewShotModel<T>::Id FewShotModel<T>::transformer_stack(
    Graph& g, const Bound& b, Id x, Id memory, const char* prefix, int n_layers,
    bool train, Rng& rng) const {
    const std::string pre(prefix);
    auto pid = [&](const std::string& name) {
        return b.ids[static_cast<size_t>(idx(name))];
    };
    for (int layer = 0; layer < n_layers; ++layer) {
        const std::string base = pre + std::to_string(layer);
        const Id normed = g.layer_norm(x, pid(base + ".ln1.g"), pid(base + ".ln1.b"));
        typename Graph::AttentionWeights w{
            pid(base + ".attn.wq"), pid(base + ".attn.bq"), pid(base + ".attn.wk"),
            pid(base + ".attn.bk"), pid(base + ".attn.wv"), pid(base + ".attn.bv"),
            pid(base + ".attn.wo"), pid(base + ".attn.bo")};
        const Id kv = memory >= 0 ? memory : normed;
        const Id attn = g.attention(normed, kv, w, cfg_.n_heads);
        x = g.add(x, g.dropout(attn, cfg_.dropout, rng, train));
        const Id normed2 = g.layer_norm(x, pid(base + ".ln2.g"), pid(base + ".ln2.b"));
        const Id ffn = g.add(
            g.matmul(g.relu(g.add(g.matmul(normed2, pid(base + ".ffn.w1")),
                                  pid(base + ".ffn.b1"))),
                     pid(base + ".ffn.w2")),
            pid(base + ".ffn.b2"));
        x = g.add(x, g.dropout(ffn, cfg_.dropout, rng, train));
    }
    return g.layer_norm(x, pid(pre + "final_ln.g"), pid(pre + "final_ln.b"));
}

template <class T>
typename FewShotModel<T>::Id FewShotModel<T>::encode_context(
    Graph& g, const Bound& b, const ContextInputs& inputs, const AblationMask& mask,
    bool train, Rng& rng) const {
    const Id tokens = token_matrix(g, b, inputs, mask);
    return transformer_stack(g, b, tokens, -1, "enc", cfg_.n_enc_layers, train, rng);
}

template <class T>
typename FewShotModel<T>::Id FewShotModel<T>::predict(Graph& g, const Bound& b,
                                                      Id context,
                                                      const nn::Tensor<T>& query_inputs,
                                                      bool train, Rng& rng) const {
    const Id q = g.matmul(g.constant(query_inputs),
                          b.ids[static_cast<size_t>(idx("query.proj"))]);
    const Id decoded =
        transformer_stack(g, b, q, context, "dec", cfg_.n_dec_layers, train, rng);
    Id h = decoded;
    for (size_t i = 0; i < cfg_.head_hidden_dims.size(); ++i) {
        h = g.relu(g.matmul(
            h, b.ids[static_cast<size_t>(idx("head.w" + std::to_string(i)))]));
    }
    return g.matmul(h, b.ids[static_cast<size_t>(idx("head.w_out"))]);
}

template <class T>
typename FewShotModel<T>::ContextMemory FewShotModel<T>::encode_context_eval(
    std::span<const Observation> observations, const StftCfg& echo_stft,
    const AblationMask& mask) const {
    const ContextInputs inputs = make_context_inputs(observations, echo_stft);
    Graph g;
    const Bound b = bind(g);
    Rng rng(0);  // dropout disabled in eval mode
    const Id tokens = token_matrix(g, b, inputs, mask);
    const Id encoded =
        transformer_stack(g, b, tokens, -1, "enc", cfg_.n_enc_layers, false, rng);
    ContextMemory memory;
    memory.tokens = g.val(tokens);
    memory.encoded = g.val(encoded);
    memory.anchor = inputs.anchor;
    return memory;
}

template <class T>
nn::Tensor<T> FewShotModel<T>::predict_eval(const ContextMemory& memory,
                                            std::span<const Query> queries) const {
    Graph g;
    const Bound b = bind(g);
    Rng rng(0);
    const Id context = g.constant(memory.encoded);
    const Id out =
        predict(g, b, context, make_query_inputs(queries, memory.anchor), false, rng);
    return g.val(out);
}

template <class T>
Spectrogram FewShotModel<T>::predict_rir(const ContextMemory& memory,
                                         const Query& query,
                                         const StftCfg& out_cfg) const {
    if (cfg_.head_mode != HeadMode::spectrogram) {
        throw ConfigError("predict_rir requires the spectrogram head");
    }
    if (out_cfg.n_bins() != cfg_.out_bins) {
        throw ShapeError("stft config bins do not match the model output shape");
    }
    const Query queries[1] = {query};
    const auto out = predict_eval(memory, queries);
    Spectrogram spec;
    spec.n_bins = cfg_.out_bins;
    spec.n_frames = cfg_.out_frames;
    spec.domain = SpecDomain::log;
    spec.cfg = out_cfg;
    spec.data.resize(out.numel());
    for (size_t i = 0; i < spec.data.size(); ++i) {
        spec.data[i] = static_cast<double>(out.data[i]);
    }
    return spec;
}

template <class T>
void FewShotModel<T>::save(const std::filesystem::path& path,
                           const std::string& sidecar_json) const {
    NamedTensors tensors;
    tensors.reserve(params_.size());
    for (size_t i = 0; i < params_.size(); ++i) {
        const auto& v = params_.value(static_cast<int>(i));
        TensorBlob blob;
        blob.dims.assign(v.shape.begin(), v.shape.end());
        if constexpr (std::is_same_v<T, float>) {
            blob.dtype = 0;
            blob.f32.assign(v.data.begin(), v.data.end());
        } else {
            blob.dtype = 1;
            blob.f64.assign(v.data.begin(), v.data.end());
        }
        tensors.emplace_back(params_.name(static_cast<int>(i)), std::move(blob));
    }
    save_checkpoint(path, tensors);
    write_text_file(path.string() + ".json", sidecar_json);
}

template <class T>
void FewShotModel<T>::load_tensors(const std::filesystem::path& path) {
    const NamedTensors tensors = load_checkpoint(path);
    size_t found = 0;
    for (const auto& [name, blob] : tensors) {
        if (!params_.contains(name)) continue;  // optimizer state, etc.
        auto& v = params_[name];
        if (blob.numel() != v.numel()) {
            throw DatasetError("checkpoint tensor shape mismatch at " + name);
        }
        if (blob.dtype == 0) {
            for (size_t j = 0; j < v.data.size(); ++j) v.data[j] = static_cast<T>(blob.f32[j]);
        } else {
            for (size_t j = 0; j < v.data.size(); ++j) v.data[j] = static_cast<T>(blob.f64[j]);
        }
        ++found;
    }
    if (found != params_.size()) {
        throw DatasetError("checkpoint is missing model parameters for " + path.string());
    }
}

template class FewShotModel<float>;
template class FewShotModel<double>;

}  // namespace fsrir
