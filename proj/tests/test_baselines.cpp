#include <doctest.h>

#include <cmath>

#include "fsrir/analysis.hpp"
#include "fsrir/baselines.hpp"
#include "fsrir/errors.hpp"
#include "fsrir/ism.hpp"
#include "fsrir/rng.hpp"

using namespace fsrir;

namespace {

Spectrogram random_log_spec(int bins, int frames, uint64_t seed) {
    Rng rng(seed);
    Spectrogram spec;
    spec.n_bins = bins;
    spec.n_frames = frames;
    spec.domain = SpecDomain::log;
    spec.cfg = desk_stft_cfg();
    spec.data.resize(2ull * bins * frames);
    for (double& v : spec.data) v = std::abs(rng.normal());
    return spec;
}

BaselineContext make_context(int n, uint64_t seed) {
    BaselineContext ctx;
    Rng rng(seed);
    for (int i = 0; i < n; ++i) {
        ctx.poses.push_back(Pose{rng.uniform(0.5, 5.5), rng.uniform(0.5, 3.5),
                                 rng.uniform(0.0, 6.28)});
        ctx.echo_log_specs.push_back(random_log_spec(8, 8, seed + 100 + static_cast<uint64_t>(i)));
    }
    return ctx;
}

}  // namespace

TEST_CASE("nearest neighbor returns the closest observation's echo") {
    auto ctx = make_context(5, 1);
    Query q{{1.0, 1.0}, ctx.poses[3]};
    const auto pred = nearest_neighbor_predict(ctx, q);
    CHECK(pred.data == ctx.echo_log_specs[3].data);
    CHECK(stft_error(pred, ctx.echo_log_specs[3]) == 0.0);
}

TEST_CASE("nearest neighbor with a single observation always returns it") {
    auto ctx = make_context(1, 2);
    Query q{{0.1, 0.1}, Pose{5.0, 3.0, 0.0}};
    CHECK(nearest_neighbor_predict(ctx, q).data == ctx.echo_log_specs[0].data);
}

TEST_CASE("nearest neighbor ties break toward the lowest index") {
    auto ctx = make_context(3, 3);
    ctx.poses[0] = Pose{1.0, 2.0, 0.0};
    ctx.poses[1] = Pose{3.0, 2.0, 1.0};  // equidistant from x=2
    Query q{{0.0, 0.0}, Pose{2.0, 2.0, 0.0}};
    CHECK(nearest_neighbor_predict(ctx, q).data == ctx.echo_log_specs[0].data);
}

TEST_CASE("empty baseline context is rejected") {
    BaselineContext ctx;
    Query q;
    CHECK_THROWS_AS(nearest_neighbor_predict(ctx, q), ConfigError);
    CHECK_THROWS_AS(linear_interp_predict(ctx, q), ConfigError);
}

TEST_CASE("linear interpolation of identical neighbors is the identity") {
    auto ctx = make_context(6, 4);
    const auto shared = random_log_spec(8, 8, 999);
    for (auto& spec : ctx.echo_log_specs) spec = shared;
    Query q{{1.0, 1.0}, Pose{2.0, 2.0, 0.0}};
    const auto pred = linear_interp_predict(ctx, q);
    for (size_t i = 0; i < pred.data.size(); ++i) {
        CHECK(pred.data[i] == doctest::Approx(shared.data[i]).epsilon(1e-9));
    }
}

TEST_CASE("linear interpolation at an observation pose returns (almost) its echo") {
    auto ctx = make_context(6, 5);
    Query q{{1.0, 1.0}, ctx.poses[2]};
    const auto pred = linear_interp_predict(ctx, q);
    // The distance clamp concentrates nearly all weight on neighbor 2.
    const double err = stft_error(pred, ctx.echo_log_specs[2]);
    CHECK(err < 1e-4);
}

TEST_CASE("linear interpolation stays inside the neighbor convex hull") {
    auto ctx = make_context(4, 6);
    Query q{{1.0, 1.0}, Pose{3.0, 2.0, 0.0}};
    const auto pred_lin = exp_mag(linear_interp_predict(ctx, q));
    for (size_t i = 0; i < pred_lin.data.size(); ++i) {
        double lo = 1e300, hi = -1e300;
        for (const auto& spec : ctx.echo_log_specs) {
            const double v = std::expm1(spec.data[i]);
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        CHECK(pred_lin.data[i] >= lo - 1e-9);
        CHECK(pred_lin.data[i] <= hi + 1e-9);
    }
}

TEST_CASE("uniform weighting option averages the neighbors") {
    auto ctx = make_context(2, 7);
    Query q{{0.0, 0.0}, Pose{2.0, 2.0, 0.0}};
    LinearInterpCfg cfg;
    cfg.uniform_weights = true;
    const auto pred = exp_mag(linear_interp_predict(ctx, q, cfg));
    for (size_t i = 0; i < pred.data.size(); ++i) {
        const double a = std::expm1(ctx.echo_log_specs[0].data[i]);
        const double b = std::expm1(ctx.echo_log_specs[1].data[i]);
        CHECK(pred.data[i] == doctest::Approx((a + b) / 2.0).epsilon(1e-9));
    }
}

TEST_CASE("analytical RIR matches its RT60 and DRR targets when re-measured") {
    for (double t60 : {0.2, 0.4, 0.6}) {
        const auto rir = analytical_rir(t60, 3.0, 16000, 16000, 77);
        const auto spec = stft_mag(rir, desk_stft_cfg());
        const auto measured = rt60(energy_decay_curve(spec));
        CHECK(measured[0] == doctest::Approx(t60).epsilon(0.10));
        CHECK(measured[1] == doctest::Approx(t60).epsilon(0.10));
        const auto d = drr(rir);
        CHECK(d[0] == doctest::Approx(3.0).epsilon(0.34));  // within 1 dB
        CHECK(d[1] == doctest::Approx(3.0).epsilon(0.34));
    }
}

TEST_CASE("analytical RIR noise realizations differ but share parameters") {
    const auto a = analytical_rir(0.3, 0.0, 8000, 16000, 1);
    const auto b = analytical_rir(0.3, 0.0, 8000, 16000, 2);
    CHECK(a.left != b.left);
    const auto da = drr(a), db = drr(b);
    CHECK(std::abs(da[0] - db[0]) < 1.0);
    const auto ra = rt60(energy_decay_curve(stft_mag(a, desk_stft_cfg())));
    const auto rb = rt60(energy_decay_curve(stft_mag(b, desk_stft_cfg())));
    CHECK(std::abs(ra[0] - rb[0]) / 0.3 < 0.15);
}

TEST_CASE("analytical RIR rejects impossible parameters") {
    CHECK_THROWS_AS(analytical_rir(-0.1, 0.0, 100, 16000, 1), ConfigError);
    CHECK_THROWS_AS(analytical_rir(0.3, 0.0, 0, 16000, 1), ConfigError);
    // Length inside the direct window leaves no tail for the DRR.
    CHECK_THROWS_AS(analytical_rir(0.3, 0.0, 20, 16000, 1), ConfigError);
}

TEST_CASE("analytical predictor emits the model output shape") {
    const auto estimator = [](const Query&) {
        return std::array<double, 2>{0.3, 2.0};
    };
    Query q{{1.0, 1.0}, Pose{2.0, 2.0, 0.0}};
    const auto spec =
        analytical_rir_plus_predict(q, estimator, desk_stft_cfg(), 0.5, 5);
    CHECK(spec.n_bins == 64);
    CHECK(spec.n_frames == 64);
    CHECK(spec.domain == SpecDomain::log);
}

TEST_CASE("oracle-shaped analytical prediction closes the RTE loop") {
    // Simulate a target, measure its parameters, shape noise to them, and
    // confirm the re-measured RT60 lands within 10%.
    RoomSpec room;
    room.width = 6.0;
    room.depth = 4.0;
    room.height = 3.0;
    room.wall_absorption.fill(0.3);
    SimCfg sim;
    const auto target = simulate_rir(room, {4.0, 2.0}, Pose{1.5, 2.0, 0.0}, sim);
    const auto target_spec = stft_mag(target, desk_stft_cfg());
    const auto t60 = rt60(energy_decay_curve(target_spec));
    const double want = (t60[0] + t60[1]) / 2.0;

    const auto estimator = [&](const Query&) {
        return std::array<double, 2>{want, 1.0};
    };
    Query q{{4.0, 2.0}, Pose{1.5, 2.0, 0.0}};
    const auto pred = analytical_rir_plus_predict(q, estimator, desk_stft_cfg(), 0.5, 9);
    const double err = rte(exp_mag(pred), target_spec);
    CHECK(err <= 0.1 * want);

    // The spectrogram-level error stays large: white noise carries none of
    // the target's fine structure.
    const double stft = stft_error(pred, log_mag(target_spec));
    CHECK(stft > 0.01);
}
