#include "fsrir/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fsrir/errors.hpp"
#include "fsrir/rng.hpp"

namespace fsrir {

namespace {

std::vector<double> receiver_distances(const BaselineContext& context,
                                       const Query& query) {
    if (context.poses.empty() || context.poses.size() != context.echo_log_specs.size()) {
        throw ConfigError("baseline context is empty or inconsistent");
    }
    std::vector<double> d(context.poses.size());
    for (size_t i = 0; i < context.poses.size(); ++i) {
        d[i] = std::hypot(context.poses[i].x - query.receiver.x,
                          context.poses[i].y - query.receiver.y);
    }
    return d;
}

}  // namespace

Spectrogram nearest_neighbor_predict(const BaselineContext& context,
                                     const Query& query) {
    const auto d = receiver_distances(context, query);
    size_t best = 0;
    for (size_t i = 1; i < d.size(); ++i) {
        if (d[i] < d[best]) best = i;  // strict: ties keep the lower index
    }
    return context.echo_log_specs[best];
}

Spectrogram linear_interp_predict(const BaselineContext& context,
                                  const Query& query,
                                  const LinearInterpCfg& cfg) {
    const auto d = receiver_distances(context, query);
    const size_t k = std::min(static_cast<size_t>(std::max(cfg.top_k, 1)), d.size());
    std::vector<size_t> order(d.size());
    std::iota(order.begin(), order.end(), 0u);
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return d[a] < d[b]; });

    std::vector<double> weights(k);
    double total = 0.0;
    for (size_t i = 0; i < k; ++i) {
        weights[i] = cfg.uniform_weights ? 1.0 : 1.0 / std::max(d[order[i]], 1e-6);
        total += weights[i];
    }
    for (double& w : weights) w /= total;

    Spectrogram acc = exp_mag(context.echo_log_specs[order[0]]);
    for (double& v : acc.data) v *= weights[0];
    for (size_t i = 1; i < k; ++i) {
        const Spectrogram lin = exp_mag(context.echo_log_specs[order[i]]);
        acc.require_same_shape(lin);
        for (size_t j = 0; j < acc.data.size(); ++j) acc.data[j] += weights[i] * lin.data[j];
    }
    return log_mag(acc);
}

BinauralRir analytical_rir(double target_rt60, double target_drr_db,
                           size_t length, int sample_rate, uint64_t seed) {
    if (!(target_rt60 > 0.0)) throw ConfigError("analytical_rir: rt60 must be positive");
    if (length == 0) throw ConfigError("analytical_rir: empty length");
    Rng rng(derive_seed(seed, {0x616e616cULL}));
    BinauralRir rir;
    rir.sample_rate = sample_rate;
    rir.left.resize(length);
    rir.right.resize(length);
    const size_t direct_end =
        std::min(length - 1, static_cast<size_t>(std::lround(2.5e-3 * sample_rate)));
    for (auto* ch : {&rir.left, &rir.right}) {
        auto& x = *ch;
        for (size_t i = 0; i < length; ++i) {
            const double t = static_cast<double>(i) / sample_rate;
            x[i] = rng.normal() * std::pow(10.0, -3.0 * t / target_rt60);
        }
        double e_direct = 0.0, e_tail = 0.0;
        for (size_t i = 0; i < length; ++i) {
            if (i <= direct_end) e_direct += x[i] * x[i];
            else e_tail += x[i] * x[i];
        }
        if (!(e_tail > 0.0)) {
            throw ConfigError("analytical_rir: zero tail energy makes the DRR unsatisfiable");
        }
        const double k =
            std::sqrt(e_tail * std::pow(10.0, target_drr_db / 10.0) / e_direct);
        for (size_t i = 0; i <= direct_end; ++i) x[i] *= k;
    }
    return rir;
}

Spectrogram analytical_rir_plus_predict(const Query& query,
                                        const ParamEstimator& estimator,
                                        const StftCfg& out_cfg,
                                        double rir_length_s, uint64_t seed) {
    const auto params = estimator(query);
    const size_t length =
        static_cast<size_t>(std::lround(rir_length_s * out_cfg.sample_rate));
    const BinauralRir noise =
        analytical_rir(params[0], params[1], length, out_cfg.sample_rate, seed);
    return log_mag(stft_mag(noise, out_cfg));
}

}  // namespace fsrir
