#include "fsrir/train.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "fsrir/analysis.hpp"
#include "fsrir/config_json.hpp"
#include "fsrir/errors.hpp"
#include "fsrir/io.hpp"
#include "fsrir/rng.hpp"

namespace fsrir {

namespace {

std::string fmt_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

template <class T>
struct TrainContext {
    typename FewShotModel<T>::ContextInputs inputs;
    nn::Tensor<T> query_inputs;         // n_train_queries x query_enc_dim
    std::vector<nn::Tensor<T>> targets;  // per query, flattened
};

template <class T>
std::vector<TrainContext<T>> build_train_set(const DatasetManifest& manifest,
                                             const FewShotModel<T>& model) {
    const ModelConfig& cfg = model.config();
    std::vector<TrainContext<T>> set;
    for (const RoomRecord& room : manifest.rooms) {
        if (room.split != "seen") continue;
        for (const ContextRecord& ctx : room.contexts) {
            TrainContext<T> tc;
            const auto observations = load_observations(manifest, ctx);
            tc.inputs = model.make_context_inputs(observations, manifest.stft);

            std::vector<Query> queries;
            for (const QueryRecord& q : ctx.queries) {
                if (q.split != "train") continue;
                const BinauralRir rir = load_rir(manifest, q.rir_path);
                const Spectrogram spec = stft_mag(rir, manifest.stft);
                nn::Tensor<T> target;
                if (cfg.head_mode == HeadMode::spectrogram) {
                    const Spectrogram logspec = log_mag(spec);
                    target = nn::Tensor<T>({1, static_cast<int>(logspec.data.size())});
                    for (size_t i = 0; i < logspec.data.size(); ++i) {
                        target.data[i] = static_cast<T>(logspec.data[i]);
                    }
                } else {
                    std::array<double, 2> rt;
                    try {
                        rt = rt60(energy_decay_curve(spec));
                    } catch (const InsufficientDecayError&) {
                        continue;  // no usable RT60 target for this query
                    }
                    const auto d = drr(rir);
                    target = nn::Tensor<T>({1, 2});
                    target.data[0] = static_cast<T>((rt[0] + rt[1]) / 2.0);
                    target.data[1] = static_cast<T>((d[0] + d[1]) / 2.0);
                }
                tc.targets.push_back(std::move(target));
                queries.push_back(Query{q.source, q.receiver});
            }
            if (tc.targets.empty()) continue;
            tc.query_inputs = model.make_query_inputs(queries, tc.inputs.anchor);
            set.push_back(std::move(tc));
        }
    }
    if (set.empty()) throw DatasetError("no seen-room training contexts in the manifest");
    return set;
}

template <class T>
void save_train_checkpoint(const FewShotModel<T>& model,
                           const nn::AdamState<T>& state, int steps_done,
                           const DatasetManifest& manifest, const TrainCfg& cfg,
                           const AblationMask& ablation,
                           const std::filesystem::path& path) {
    NamedTensors tensors;
    const auto& params = model.params();
    auto to_blob = [](const nn::Tensor<T>& t) {
        TensorBlob blob;
        blob.dims.assign(t.shape.begin(), t.shape.end());
        if constexpr (std::is_same_v<T, float>) {
            blob.dtype = 0;
            blob.f32.assign(t.data.begin(), t.data.end());
        } else {
            blob.dtype = 1;
            blob.f64.assign(t.data.begin(), t.data.end());
        }
        return blob;
    };
    for (size_t i = 0; i < params.size(); ++i) {
        tensors.emplace_back(params.name(static_cast<int>(i)),
                             to_blob(params.value(static_cast<int>(i))));
    }
    for (size_t i = 0; i < params.size(); ++i) {
        tensors.emplace_back("optim.m." + params.name(static_cast<int>(i)),
                             to_blob(state.m[i]));
        tensors.emplace_back("optim.v." + params.name(static_cast<int>(i)),
                             to_blob(state.v[i]));
    }
    save_checkpoint(path, tensors);

    ojson sidecar;
    sidecar["format"] = "fsrir-checkpoint-v1";
    sidecar["model"] = model_config_to_json(model.config());
    sidecar["stft"] = stft_cfg_to_json(manifest.stft);
    sidecar["rir_length"] = manifest.sim.rir_length;
    sidecar["ablation"] = ablation_to_json(ablation);
    sidecar["train"] = ojson{{"steps", cfg.steps},
                             {"batch_contexts", cfg.batch_contexts},
                             {"queries_per_context", cfg.queries_per_context},
                             {"seed", cfg.seed},
                             {"precision", cfg.precision},
                             {"adam", adam_cfg_to_json(cfg.adam)},
                             {"loss", loss_cfg_to_json(cfg.loss)}};
    sidecar["steps_done"] = steps_done;
    sidecar["adam_step"] = state.step;
    write_text_file(path.string() + ".json", sidecar.dump(2) + "\n");
}

template <class T>
void load_train_checkpoint(FewShotModel<T>& model, nn::AdamState<T>& state,
                           int& steps_done, const std::filesystem::path& path) {
    const NamedTensors tensors = load_checkpoint(path);
    auto& params = model.params();
    auto copy_into = [](const TensorBlob& blob, nn::Tensor<T>& dst, const std::string& name) {
        if (blob.numel() != dst.numel()) {
            throw DatasetError("checkpoint tensor shape mismatch at " + name);
        }
        if (blob.dtype == 0) {
            for (size_t j = 0; j < dst.data.size(); ++j) dst.data[j] = static_cast<T>(blob.f32[j]);
        } else {
            for (size_t j = 0; j < dst.data.size(); ++j) dst.data[j] = static_cast<T>(blob.f64[j]);
        }
    };
    size_t found = 0;
    for (const auto& [name, blob] : tensors) {
        if (name.rfind("optim.m.", 0) == 0) {
            const std::string base = name.substr(8);
            for (size_t i = 0; i < params.size(); ++i) {
                if (params.name(static_cast<int>(i)) == base) copy_into(blob, state.m[i], name);
            }
        } else if (name.rfind("optim.v.", 0) == 0) {
            const std::string base = name.substr(8);
            for (size_t i = 0; i < params.size(); ++i) {
                if (params.name(static_cast<int>(i)) == base) copy_into(blob, state.v[i], name);
            }
        } else {
            for (size_t i = 0; i < params.size(); ++i) {
                if (params.name(static_cast<int>(i)) == name) {
                    copy_into(blob, params.value(static_cast<int>(i)), name);
                    ++found;
                }
            }
        }
    }
    if (found != params.size()) {
        throw DatasetError("checkpoint is missing model parameters");
    }
    const ojson sidecar = ojson::parse(read_text_file(path.string() + ".json"));
    steps_done = sidecar.value("steps_done", 0);
    state.step = sidecar.value("adam_step", static_cast<int64_t>(steps_done));
}

template <class T>
TrainResult train_impl(const DatasetManifest& manifest, const ModelConfig& model_cfg,
                       const TrainCfg& cfg, const AblationMask& ablation,
                       const std::filesystem::path& out_dir,
                       const std::filesystem::path& resume_from) {
    std::filesystem::create_directories(out_dir);
    FewShotModel<T> model(model_cfg, cfg.seed);
    auto& params = model.params();
    auto state = nn::AdamState<T>::init(params);
    int steps_done = 0;
    if (!resume_from.empty()) {
        load_train_checkpoint(model, state, steps_done, resume_from);
    }

    LossCfg loss_cfg = cfg.loss;
    if (ablation.no_ld) loss_cfg.lambda_d = 0.0;

    const auto train_set = build_train_set(manifest, model);
    const int n_ctx = static_cast<int>(train_set.size());
    const int fbins = model_cfg.out_bins;
    const int frames = model_cfg.out_frames;

    TrainResult result;
    result.checkpoint = out_dir / "model.ckpt";

    std::ostringstream curve_csv;
    curve_csv << "step,l1,l_d,total\n";
    auto log_point = [&](const LossCurvePoint& p) {
        result.curve.push_back(p);
        curve_csv << p.step << ',' << fmt_double(p.l1) << ',' << fmt_double(p.l_d)
                  << ',' << fmt_double(p.total) << '\n';
    };

    for (int step = steps_done; step < cfg.steps; ++step) {
        Rng batch_rng(derive_seed(cfg.seed, {5, static_cast<uint64_t>(step)}));
        auto grad_acc = params.zeros_like();
        double l1_sum = 0.0, ld_sum = 0.0, total_sum = 0.0;
        size_t rows = 0;
        bool nan_hit = false;

        for (int b = 0; b < cfg.batch_contexts && !nan_hit; ++b) {
            const auto& ctx = train_set[batch_rng.uniform_int(static_cast<uint64_t>(n_ctx))];
            const int n_q = static_cast<int>(ctx.targets.size());
            const int m = std::min(cfg.queries_per_context, n_q);
            std::vector<int> picks(static_cast<size_t>(m));
            for (int i = 0; i < m; ++i) {
                picks[static_cast<size_t>(i)] =
                    static_cast<int>(batch_rng.uniform_int(static_cast<uint64_t>(n_q)));
            }

            nn::Tensor<T> qin({m, model_cfg.query_enc_dim()});
            for (int i = 0; i < m; ++i) {
                for (int c = 0; c < model_cfg.query_enc_dim(); ++c) {
                    qin.at(i, c) = ctx.query_inputs.at(picks[static_cast<size_t>(i)], c);
                }
            }

            Rng dropout_rng(derive_seed(cfg.seed, {6, static_cast<uint64_t>(step),
                                                   static_cast<uint64_t>(b)}));
            typename FewShotModel<T>::Graph g;
            const auto bound = model.bind(g);
            const auto context =
                model.encode_context(g, bound, ctx.inputs, ablation, true, dropout_rng);
            const auto out = model.predict(g, bound, context, qin, true, dropout_rng);
            const nn::Tensor<T>& out_val = g.val(out);

            nn::Tensor<T> out_grad(out_val.shape);
            const T row_scale =
                static_cast<T>(1.0 / (static_cast<double>(cfg.batch_contexts) * m));
            const int out_dim = out_val.dim(1);
            for (int r = 0; r < m; ++r) {
                const T* pred_row = out_val.data.data() + static_cast<size_t>(r) * out_dim;
                const nn::Tensor<T>& target = ctx.targets[static_cast<size_t>(picks[static_cast<size_t>(r)])];
                if (model_cfg.head_mode == HeadMode::spectrogram) {
                    const auto lv = total_loss(pred_row, target.data.data(), 2, fbins,
                                               frames, loss_cfg);
                    l1_sum += lv.l1;
                    ld_sum += lv.l_d;
                    total_sum += lv.total;
                    if (!std::isfinite(lv.total)) nan_hit = true;
                    for (int c = 0; c < out_dim; ++c) {
                        out_grad.at(r, c) = lv.grad[static_cast<size_t>(c)] * row_scale;
                    }
                } else {
                    const auto lv = l1_loss(pred_row, target.data.data(),
                                            static_cast<size_t>(out_dim));
                    l1_sum += lv.value;
                    total_sum += lv.value;
                    if (!std::isfinite(lv.value)) nan_hit = true;
                    for (int c = 0; c < out_dim; ++c) {
                        out_grad.at(r, c) = lv.grad[static_cast<size_t>(c)] * row_scale;
                    }
                }
                ++rows;
            }
            if (nan_hit) break;
            g.backward(out, out_grad);
            for (size_t i = 0; i < params.size(); ++i) {
                if (!g.has_grad(bound.ids[i])) continue;
                const auto& gp = g.grad(bound.ids[i]);
                for (size_t j = 0; j < gp.data.size(); ++j) grad_acc[i].data[j] += gp.data[j];
            }
        }

        if (!nan_hit) {
            try {
                adam_step(params, grad_acc, cfg.adam, state);
            } catch (const OptimizerError&) {
                nan_hit = true;
            }
        }
        if (nan_hit) {
            // Parameters are untouched for the failing step: save them as
            // the last good state and stop.
            result.aborted_on_nan = true;
            result.steps_run = step;
            save_train_checkpoint(model, state, step, manifest, cfg, ablation,
                                  result.checkpoint);
            write_text_file(out_dir / "loss_curve.csv", curve_csv.str());
            return result;
        }

        const double inv_rows = rows ? 1.0 / static_cast<double>(rows) : 0.0;
        if (step % std::max(cfg.log_every, 1) == 0 || step + 1 == cfg.steps) {
            log_point({step, total_sum * inv_rows, l1_sum * inv_rows, ld_sum * inv_rows});
        }
    }

    result.steps_run = cfg.steps;
    save_train_checkpoint(model, state, cfg.steps, manifest, cfg, ablation,
                          result.checkpoint);
    write_text_file(out_dir / "loss_curve.csv", curve_csv.str());
    return result;
}

}  // namespace

void fit_output_shape(ModelConfig& cfg, const DatasetManifest& manifest) {
    cfg.out_bins = manifest.stft.n_bins();
    const size_t rir_len = static_cast<size_t>(
        std::lround(manifest.sim.rir_length * manifest.sim.sample_rate));
    cfg.out_frames = manifest.stft.n_frames(rir_len);
    cfg.n_rays = manifest.n_rays;
}

TrainResult train_model(const DatasetManifest& manifest, const ModelConfig& model_cfg,
                        const TrainCfg& cfg, const AblationMask& ablation,
                        const std::filesystem::path& out_dir,
                        const std::filesystem::path& resume_from) {
    validate_manifest(manifest);
    ModelConfig checked = model_cfg;
    checked.validate();
    if (checked.out_bins != manifest.stft.n_bins()) {
        throw ConfigError("model out_bins does not match the dataset stft");
    }
    if (cfg.precision == "f32") {
        return train_impl<float>(manifest, checked, cfg, ablation, out_dir, resume_from);
    }
    if (cfg.precision == "f64") {
        return train_impl<double>(manifest, checked, cfg, ablation, out_dir, resume_from);
    }
    throw ConfigError("train precision must be f32 or f64");
}

}  // namespace fsrir
