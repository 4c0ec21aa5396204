#include <doctest.h>

#include <cmath>

#include "fsrir/analysis.hpp"
#include "fsrir/errors.hpp"
#include "fsrir/ism.hpp"
#include "fsrir/rng.hpp"

using namespace fsrir;

namespace {

constexpr double kPi = 3.14159265358979323846;

Spectrogram make_spec(int n_bins, int n_frames, double fill = 0.0) {
    Spectrogram spec;
    spec.n_bins = n_bins;
    spec.n_frames = n_frames;
    spec.domain = SpecDomain::linear;
    spec.cfg = desk_stft_cfg();
    spec.data.assign(2ull * n_bins * n_frames, fill);
    return spec;
}

// Waveform with a pure 10^(-3t/T) amplitude envelope, so the energy hits
// -60 dB exactly at t = T.
BinauralRir exp_decay_rir(double t60, double length_s, double scale = 1.0,
                          uint64_t seed = 1) {
    BinauralRir rir;
    rir.sample_rate = 16000;
    const size_t n = static_cast<size_t>(length_s * rir.sample_rate);
    rir.left.resize(n);
    rir.right.resize(n);
    Rng rng(seed);
    for (size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / rir.sample_rate;
        const double env = std::pow(10.0, -3.0 * t / t60) * scale;
        rir.left[i] = env * rng.normal();
        rir.right[i] = env * rng.normal();
    }
    return rir;
}

}  // namespace

TEST_CASE("energy decay curve of a single nonzero frame is a step") {
    auto spec = make_spec(4, 6);
    spec.at(0, 2, 3) = 2.0;  // energy 4 at frame 3
    spec.at(1, 1, 0) = 1.0;
    const auto edc = energy_decay_curve(spec);
    for (int t = 0; t <= 3; ++t) CHECK(edc.at(0, t) == doctest::Approx(4.0));
    for (int t = 4; t < 6; ++t) CHECK(edc.at(0, t) == 0.0);
    CHECK(edc.at(1, 0) == doctest::Approx(1.0));
}

TEST_CASE("energy decay curve starts at the total envelope energy") {
    auto spec = make_spec(8, 10);
    Rng rng(2);
    double totals[2] = {0.0, 0.0};
    for (int ch = 0; ch < 2; ++ch) {
        for (int f = 0; f < 8; ++f) {
            for (int t = 0; t < 10; ++t) {
                const double v = std::abs(rng.normal());
                spec.at(ch, f, t) = v;
                totals[ch] += v * v;
            }
        }
    }
    const auto edc = energy_decay_curve(spec);
    CHECK(edc.at(0, 0) == doctest::Approx(totals[0]).epsilon(1e-12));
    CHECK(edc.at(1, 0) == doctest::Approx(totals[1]).epsilon(1e-12));
}

TEST_CASE("energy decay curve matches the geometric-series closed form") {
    const int frames = 40;
    auto spec = make_spec(1, frames);
    const double r = 0.8;
    for (int t = 0; t < frames; ++t) {
        // envelope e[t] = r^t needs magnitude sqrt(r^t)
        const double mag = std::pow(r, static_cast<double>(t) / 2.0);
        spec.at(0, 0, t) = mag;
        spec.at(1, 0, t) = mag;
    }
    const auto edc = energy_decay_curve(spec);
    for (int t = 0; t < frames; ++t) {
        const double expected = std::pow(r, t) / (1.0 - r) *
                                (1.0 - std::pow(r, frames - t));
        CHECK(edc.at(0, t) == doctest::Approx(expected).epsilon(1e-9));
    }
}

TEST_CASE("energy decay curve is nonincreasing and nonnegative on random input") {
    auto spec = make_spec(16, 50);
    Rng rng(3);
    for (double& v : spec.data) v = std::abs(rng.normal());
    const auto edc = energy_decay_curve(spec);
    for (int ch = 0; ch < 2; ++ch) {
        for (int t = 0; t + 1 < edc.n_frames; ++t) {
            CHECK(edc.at(ch, t) >= edc.at(ch, t + 1));
            CHECK(edc.at(ch, t + 1) >= 0.0);
        }
    }
}

TEST_CASE("energy decay curve rejects log-domain input") {
    auto spec = make_spec(4, 4, 1.0);
    const auto logd = log_mag(spec);
    CHECK_THROWS_AS(energy_decay_curve(logd), DomainError);
}

TEST_CASE("rt60 recovers synthetic decay constants within 5%") {
    for (double t60 : {0.2, 0.5, 1.0}) {
        const auto rir = exp_decay_rir(t60, t60 * 1.2 + 0.3);
        const auto spec = stft_mag(rir, desk_stft_cfg());
        const auto estimate = rt60(energy_decay_curve(spec));
        CHECK(estimate[0] == doctest::Approx(t60).epsilon(0.05));
        CHECK(estimate[1] == doctest::Approx(t60).epsilon(0.05));
    }
}

TEST_CASE("rt60 is invariant to amplitude scaling") {
    const auto rir = exp_decay_rir(0.4, 0.8);
    const auto scaled = exp_decay_rir(0.4, 0.8, 37.5);
    const auto a = rt60(energy_decay_curve(stft_mag(rir, desk_stft_cfg())));
    const auto b = rt60(energy_decay_curve(stft_mag(scaled, desk_stft_cfg())));
    CHECK(std::abs(a[0] - b[0]) / a[0] < 1e-6);
    CHECK(std::abs(a[1] - b[1]) / a[1] < 1e-6);
}

TEST_CASE("rt60 doubles when the RIR is time-stretched by two") {
    const auto rir = exp_decay_rir(0.25, 0.6);
    const auto stretched = exp_decay_rir(0.5, 1.2);
    const auto a = rt60(energy_decay_curve(stft_mag(rir, desk_stft_cfg())));
    const auto b = rt60(energy_decay_curve(stft_mag(stretched, desk_stft_cfg())));
    CHECK(b[0] == doctest::Approx(2.0 * a[0]).epsilon(0.08));
}

TEST_CASE("rt60 reports insufficient decay") {
    auto spec = make_spec(4, 30, 1.0);  // flat: never decays
    CHECK_THROWS_AS(rt60(energy_decay_curve(spec)), InsufficientDecayError);
}

TEST_CASE("edt equals rt60 for a single-slope decay and undershoots a two-slope one") {
    const auto rir = exp_decay_rir(0.4, 0.9);
    const auto edc = energy_decay_curve(stft_mag(rir, desk_stft_cfg()));
    const auto t_rt = rt60(edc);
    const auto t_edt = edt(edc);
    CHECK(t_edt[0] == doctest::Approx(t_rt[0]).epsilon(0.02));

    // Fast early slope then slow tail: EDT < RT60.
    BinauralRir two_slope;
    two_slope.sample_rate = 16000;
    const size_t n = 16000;
    two_slope.left.resize(n);
    two_slope.right.resize(n);
    Rng rng(9);
    for (size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / 16000.0;
        const double env = std::pow(10.0, -3.0 * t / 0.15) +
                           0.02 * std::pow(10.0, -3.0 * t / 1.2);
        const double v = env * rng.normal();
        two_slope.left[i] = v;
        two_slope.right[i] = v;
    }
    const auto edc2 = energy_decay_curve(stft_mag(two_slope, desk_stft_cfg()));
    CHECK(edt(edc2)[0] < rt60(edc2)[0]);
}

TEST_CASE("drr identities") {
    BinauralRir delta;
    delta.sample_rate = 16000;
    delta.left.assign(2000, 0.0);
    delta.right.assign(2000, 0.0);
    delta.left[100] = 1.0;
    delta.right[100] = 1.0;
    const auto capped = drr(delta);
    CHECK(capped[0] == doctest::Approx(80.0));

    // Two equal-energy impulses far apart: 0 dB.
    BinauralRir pair = delta;
    pair.left[1500] = 1.0;
    pair.right[1500] = 1.0;
    const auto balanced = drr(pair);
    CHECK(balanced[0] == doctest::Approx(0.0).epsilon(1e-9));

    BinauralRir silent;
    silent.sample_rate = 16000;
    silent.left.assign(100, 0.0);
    silent.right.assign(100, 0.0);
    CHECK_THROWS_AS(drr(silent), DegenerateInputError);
}

TEST_CASE("drr rises monotonically with wall absorption in simulated rooms") {
    RoomSpec room;
    room.width = 6.0;
    room.depth = 4.0;
    room.height = 3.0;
    SimCfg cfg;
    Pose receiver{2.0, 2.0, 0.0};
    double prev = -100.0;
    for (double absorption : {0.2, 0.5, 0.8}) {
        room.wall_absorption.fill(absorption);
        const auto rir = simulate_rir(room, {4.0, 2.5}, receiver, cfg);
        const auto d = drr(rir);
        const double mean = (d[0] + d[1]) / 2.0;
        CHECK(mean > prev);
        prev = mean;
    }
}

TEST_CASE("stft_error identities and symmetry") {
    auto a = make_spec(8, 8);
    Rng rng(12);
    for (double& v : a.data) v = std::abs(rng.normal());
    const auto la = log_mag(a);
    CHECK(stft_error(la, la) == 0.0);

    auto shifted = la;
    for (double& v : shifted.data) v += 0.03;
    CHECK(stft_error(shifted, la) == doctest::Approx(0.03).epsilon(1e-9));
    CHECK(stft_error(la, shifted) == doctest::Approx(stft_error(shifted, la)));

    auto wrong_shape = make_spec(4, 8);
    CHECK_THROWS_AS(stft_error(log_mag(wrong_shape), la), ShapeError);
}

TEST_CASE("rte and drre vanish on identical inputs and swap-invariantly") {
    const auto rir = exp_decay_rir(0.3, 0.7);
    CHECK(rte(rir, rir, desk_stft_cfg()) == 0.0);
    CHECK(drre(rir, rir) == 0.0);

    const auto other = exp_decay_rir(0.45, 0.7, 1.0, 77);
    BinauralRir rir_swapped = rir;
    std::swap(rir_swapped.left, rir_swapped.right);
    BinauralRir other_swapped = other;
    std::swap(other_swapped.left, other_swapped.right);
    CHECK(rte(rir, other, desk_stft_cfg()) ==
          doctest::Approx(rte(rir_swapped, other_swapped, desk_stft_cfg())));
}

TEST_CASE("rte propagates which side failed to decay") {
    const auto good = exp_decay_rir(0.3, 0.7);
    BinauralRir flat;
    flat.sample_rate = 16000;
    flat.left.assign(11200, 1.0);
    flat.right.assign(11200, 1.0);
    try {
        (void)rte(flat, good, desk_stft_cfg());
        FAIL("expected InsufficientDecayError");
    } catch (const InsufficientDecayError& e) {
        CHECK(std::string(e.what()).find("pred") != std::string::npos);
    }
}

TEST_CASE("localization recovers a free-field source 2 m ahead") {
    RoomSpec room;
    room.width = 8.0;
    room.depth = 6.0;
    room.height = 3.0;
    room.wall_absorption.fill(1.0);  // free field
    SimCfg cfg;
    Pose receiver{3.0, 3.0, 0.0};
    const std::array<double, 2> source{5.0, 3.0};
    const auto rir = simulate_rir(room, source, receiver, cfg);

    LocalizeCfg loc;
    const auto est = localize_source(rir, receiver, loc);
    const double err = std::hypot(est[0] - source[0], est[1] - source[1]);
    CHECK(err <= 0.05);
}

TEST_CASE("localization recovers bearing all around the receiver") {
    RoomSpec room;
    room.width = 10.0;
    room.depth = 10.0;
    room.height = 3.0;
    room.wall_absorption.fill(1.0);
    SimCfg cfg;
    Pose receiver{5.0, 5.0, 0.7};
    LocalizeCfg loc;
    for (double bearing : {0.0, 0.8, 2.2, 3.1, -2.4, -1.2, -0.4}) {
        const double d = 2.5;
        const std::array<double, 2> source{
            receiver.x + d * std::cos(receiver.theta + bearing),
            receiver.y + d * std::sin(receiver.theta + bearing)};
        const auto rir = simulate_rir(room, source, receiver, cfg);
        const auto est = localize_source(rir, receiver, loc);
        const double err = std::hypot(est[0] - source[0], est[1] - source[1]);
        CAPTURE(bearing);
        CHECK(err <= 0.35);
    }
}

TEST_CASE("boresight source has near-zero interaural delay") {
    RoomSpec room;
    room.width = 8.0;
    room.depth = 6.0;
    room.height = 3.0;
    room.wall_absorption.fill(1.0);
    SimCfg cfg;
    Pose receiver{2.0, 3.0, 0.0};
    const auto rir = simulate_rir(room, {6.0, 3.0}, receiver, cfg);
    size_t pl = 0, pr = 0;
    for (size_t i = 0; i < rir.length(); ++i) {
        if (std::abs(rir.left[i]) > std::abs(rir.left[pl])) pl = i;
        if (std::abs(rir.right[i]) > std::abs(rir.right[pr])) pr = i;
    }
    CHECK(std::abs(static_cast<long>(pl) - static_cast<long>(pr)) <= 1);
}

TEST_CASE("mirroring the scene across the heading axis mirrors the bearing") {
    RoomSpec room;
    room.width = 8.0;
    room.depth = 8.0;
    room.height = 3.0;
    room.wall_absorption.fill(1.0);
    SimCfg cfg;
    Pose receiver{4.0, 4.0, 0.0};  // heading +x: mirror flips y
    const std::array<double, 2> source{5.5, 5.2};
    const std::array<double, 2> mirrored{5.5, 2.8};
    LocalizeCfg loc;
    const auto est = localize_source(simulate_rir(room, source, receiver, cfg),
                                     receiver, loc);
    const auto est_m = localize_source(
        simulate_rir(room, mirrored, receiver, cfg), receiver, loc);
    CHECK(est[0] == doctest::Approx(est_m[0]).epsilon(1e-3));
    CHECK(est[1] - 4.0 == doctest::Approx(-(est_m[1] - 4.0)).epsilon(1e-2));
}

TEST_CASE("localization rejects silence") {
    BinauralRir silent;
    silent.sample_rate = 16000;
    silent.left.assign(1000, 0.0);
    silent.right.assign(1000, 0.0);
    LocalizeCfg loc;
    CHECK_THROWS_AS(localize_source(silent, Pose{}, loc), LocalizationError);
}
