#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "fsrir/analysis.hpp"
#include "fsrir/errors.hpp"
#include "fsrir/ism.hpp"
#include "fsrir/rng.hpp"

using namespace fsrir;

namespace {

constexpr double kPi = 3.14159265358979323846;

RoomSpec test_room(double absorption = 0.3) {
    RoomSpec room;
    room.width = 6.0;
    room.depth = 4.0;
    room.height = 3.0;
    room.wall_absorption.fill(absorption);
    room.agent_height = 1.5;
    return room;
}

size_t peak_index(const std::vector<double>& x) {
    size_t best = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        if (std::abs(x[i]) > std::abs(x[best])) best = i;
    }
    return best;
}

}  // namespace

TEST_CASE("fully absorbing walls leave a single direct arrival at d/c") {
    RoomSpec room = test_room();
    room.wall_absorption.fill(1.0);  // reflection coefficient 0
    SimCfg cfg;
    cfg.ear_baseline = 0.0;
    cfg.ear_directivity_exponent = 0.0;
    // Source 3.43 m from the receiver: delay is exactly sample 160.
    Pose receiver{1.0, 2.0, 0.0};
    const auto rir = simulate_rir(room, {4.43, 2.0}, receiver, cfg);
    CHECK(peak_index(rir.left) == 160);
    CHECK(peak_index(rir.right) == 160);
    // Energy beyond the direct pulse is zero.
    double tail = 0.0;
    for (size_t i = 260; i < rir.left.size(); ++i) tail += std::abs(rir.left[i]);
    CHECK(tail == 0.0);
    CHECK(rir.left[160] == doctest::Approx(1.0 / 3.43).epsilon(1e-6));
}

TEST_CASE("left/right channels swap when the source mirrors sides") {
    RoomSpec room = test_room();
    SimCfg cfg;
    Pose receiver{3.0, 2.0, 0.0};  // centered in y, facing +x
    const auto rir_left_side = simulate_rir(room, {3.0, 3.0}, receiver, cfg);
    const auto rir_right_side = simulate_rir(room, {3.0, 1.0}, receiver, cfg);
    REQUIRE(rir_left_side.length() == rir_right_side.length());
    for (size_t i = 0; i < rir_left_side.length(); ++i) {
        CHECK(rir_left_side.left[i] ==
              doctest::Approx(rir_right_side.right[i]).epsilon(1e-9));
        CHECK(rir_left_side.right[i] ==
              doctest::Approx(rir_right_side.left[i]).epsilon(1e-9));
    }
}

TEST_CASE("higher absorption strictly lowers the measured RT60") {
    SimCfg cfg;
    Pose receiver{2.0, 1.5, 0.5};
    std::array<double, 2> source{4.5, 2.5};
    double prev = 1e9;
    for (double absorption : {0.2, 0.4, 0.6, 0.8}) {
        const auto rir = simulate_rir(test_room(absorption), source, receiver, cfg);
        const auto spec = stft_mag(rir, desk_stft_cfg());
        const auto t = rt60(energy_decay_curve(spec));
        const double mean_rt = (t[0] + t[1]) / 2.0;
        CHECK(mean_rt < prev);
        prev = mean_rt;
    }
}

TEST_CASE("direct arrival lands within one sample of round(d_eff/c * sr)") {
    RoomSpec room = test_room();
    room.wall_absorption.fill(1.0);  // isolate the direct path
    SimCfg cfg;
    cfg.ear_directivity_exponent = 0.0;
    Rng rng(52);
    for (int trial = 0; trial < 100; ++trial) {
        Pose receiver{rng.uniform(0.4, 5.6), rng.uniform(0.4, 3.6),
                      rng.uniform(0.0, 2.0 * kPi)};
        std::array<double, 2> source{rng.uniform(0.4, 5.6), rng.uniform(0.4, 3.6)};
        const auto rir = simulate_rir(room, source, receiver, cfg);
        const double hx = std::cos(receiver.theta), hy = std::sin(receiver.theta);
        const double half_b = cfg.ear_baseline / 2.0;
        const double ex[2] = {receiver.x - hy * half_b, receiver.x + hy * half_b};
        const double ey[2] = {receiver.y + hx * half_b, receiver.y - hx * half_b};
        for (int ear = 0; ear < 2; ++ear) {
            const double d = std::max(
                std::hypot(source[0] - ex[ear], source[1] - ey[ear]),
                cfg.min_distance);
            const long expected = std::lround(d / cfg.speed_of_sound * cfg.sample_rate);
            const auto& ch = ear == 0 ? rir.left : rir.right;
            CHECK(std::abs(static_cast<long>(peak_index(ch)) - expected) <= 1);
        }
    }
}

TEST_CASE("echo at the center of a square room has equal channels") {
    RoomSpec room = test_room();
    room.width = 5.0;
    room.depth = 5.0;
    SimCfg cfg;
    const Pose pose{2.5, 2.5, kPi / 4.0};  // facing the corner diagonal
    const auto echo = simulate_echo(room, pose, cfg);
    for (size_t i = 0; i < echo.length(); ++i) {
        CHECK(echo.left[i] == doctest::Approx(echo.right[i]).epsilon(1e-9));
    }
}

TEST_CASE("echo direct arrival is clamped to min_distance/c") {
    RoomSpec room = test_room();
    room.wall_absorption.fill(1.0);
    SimCfg cfg;
    const auto echo = simulate_echo(room, {3.0, 2.0, 0.0}, cfg);
    const long expected =
        std::lround(cfg.min_distance / cfg.speed_of_sound * cfg.sample_rate);
    CHECK(std::abs(static_cast<long>(peak_index(echo.left)) - expected) <= 1);
}

TEST_CASE("echo energy decreases as absorption rises toward 1") {
    SimCfg cfg;
    const Pose pose{2.0, 1.5, 0.3};
    double prev = 1e18;
    for (double absorption : {0.2, 0.5, 0.8, 0.99}) {
        const auto echo = simulate_echo(test_room(absorption), pose, cfg);
        const double e = echo.energy();
        CHECK(e < prev);
        prev = e;
    }
}

TEST_CASE("total energy is nondecreasing in the reflection order cap") {
    RoomSpec room = test_room(0.3);
    Pose receiver{1.5, 1.0, 0.2};
    std::array<double, 2> source{4.0, 3.0};
    double prev = 0.0;
    std::vector<double> energies;
    for (int order : {0, 2, 4, 8, 12, 16, 20}) {
        SimCfg cfg;
        cfg.max_reflection_order = order;
        const auto rir = simulate_rir(room, source, receiver, cfg);
        const double e = rir.energy();
        CHECK(e >= prev * (1.0 - 1e-12));
        energies.push_back(e);
        prev = e;
    }
    // The tail beyond the cap shrinks geometrically: successive increments
    // decay.
    const size_t n = energies.size();
    const double inc_last = energies[n - 1] - energies[n - 2];
    const double inc_mid = energies[n - 3] - energies[n - 4];
    CHECK(inc_last < inc_mid);
}

TEST_CASE("omnidirectional monaural simulation is reciprocal") {
    RoomSpec room = test_room(0.35);
    SimCfg cfg;
    cfg.ear_baseline = 0.0;
    cfg.ear_directivity_exponent = 0.0;
    Pose a{1.2, 1.1, 0.0};
    Pose b{4.7, 2.9, 0.0};
    const auto fwd = simulate_rir(room, {a.x, a.y}, b, cfg);
    const auto bwd = simulate_rir(room, {b.x, b.y}, a, cfg);
    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < fwd.length(); ++i) {
        const double d = fwd.left[i] - bwd.left[i];
        num += d * d;
        den += fwd.left[i] * fwd.left[i];
    }
    CHECK(std::sqrt(num / den) < 1e-6);
}

TEST_CASE("rir length too short for the direct path is rejected") {
    RoomSpec room = test_room();
    SimCfg cfg;
    cfg.rir_length = 0.005;  // 80 samples; direct path at ~160
    CHECK_THROWS_AS(
        simulate_rir(room, {1.0, 2.0}, Pose{4.43, 2.0, 0.0}, cfg),
        ConfigError);
}

TEST_CASE("ambient noise honors the requested SNR") {
    RoomSpec room = test_room();
    SimCfg cfg;
    const auto echo = simulate_echo(room, {2.0, 2.0, 0.0}, cfg);

    SUBCASE("infinite SNR is the identity") {
        const auto out = add_ambient_noise(
            echo, NoiseKind::white, std::numeric_limits<double>::infinity(), 5);
        CHECK(out.left == echo.left);
        CHECK(out.right == echo.right);
    }

    SUBCASE("snr 0 dB gives equal signal and noise energy") {
        for (NoiseKind kind : {NoiseKind::white, NoiseKind::band_burst}) {
            const auto out = add_ambient_noise(echo, kind, 0.0, 5);
            double e_noise = 0.0;
            for (size_t i = 0; i < echo.length(); ++i) {
                const double dl = out.left[i] - echo.left[i];
                const double dr = out.right[i] - echo.right[i];
                e_noise += dl * dl + dr * dr;
            }
            CHECK(e_noise == doctest::Approx(echo.energy()).epsilon(1e-6));
        }
    }

    SUBCASE("zero-energy echo is rejected") {
        BinauralRir silent;
        silent.sample_rate = 16000;
        silent.left.assign(100, 0.0);
        silent.right.assign(100, 0.0);
        CHECK_THROWS_AS(add_ambient_noise(silent, NoiseKind::white, 10.0, 1),
                        DegenerateInputError);
    }
}
