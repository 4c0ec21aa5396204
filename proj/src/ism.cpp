#include "fsrir/ism.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fsrir/errors.hpp"
#include "fsrir/fft.hpp"
#include "fsrir/rng.hpp"

namespace fsrir {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr int kSincHalfWidth = 40;  // 81-tap Hann-windowed sinc

double sinc(double x) {
    if (x == 0.0) return 1.0;
    const double px = kPi * x;
    return std::sin(px) / px;
}

struct Vec3 {
    double x, y, z;
};

// Adds amp * windowed_sinc(t - delay_samples) into the buffer.
void add_impulse(std::vector<double>& buf, double delay_samples, double amp) {
    const double half = kSincHalfWidth + 0.5;
    const long lo = static_cast<long>(std::ceil(delay_samples - half));
    const long hi = static_cast<long>(std::floor(delay_samples + half));
    const long n = static_cast<long>(buf.size());
    for (long m = std::max(lo, 0L); m <= std::min(hi, n - 1); ++m) {
        const double x = static_cast<double>(m) - delay_samples;
        const double w = 0.5 * (1.0 + std::cos(kPi * x / half));
        buf[static_cast<size_t>(m)] += amp * w * sinc(x);
    }
}

}  // namespace

void SimCfg::validate() const {
    if (max_reflection_order < 0) throw ConfigError("sim: reflection order must be >= 0");
    if (!(speed_of_sound > 0.0)) throw ConfigError("sim: speed of sound must be positive");
    if (!(rir_length > 0.0)) throw ConfigError("sim: rir length must be positive");
    if (sample_rate <= 0) throw ConfigError("sim: sample rate must be positive");
    if (!(ear_baseline >= 0.0)) throw ConfigError("sim: ear baseline must be >= 0");
    if (!(ear_directivity_exponent >= 0.0)) {
        throw ConfigError("sim: directivity exponent must be >= 0");
    }
    if (!(min_distance > 0.0)) throw ConfigError("sim: min distance must be positive");
}

BinauralRir simulate_rir(const RoomSpec& room, std::array<double, 2> source,
                         const Pose& receiver, const SimCfg& cfg) {
    room.validate();
    cfg.validate();
    if (!inside_room(room, source[0], source[1])) {
        throw ConfigError("simulate_rir: source outside the room footprint");
    }
    if (!inside_room(room, receiver.x, receiver.y)) {
        throw ConfigError("simulate_rir: receiver outside the room footprint");
    }

    const size_t n_samples =
        static_cast<size_t>(std::lround(cfg.rir_length * cfg.sample_rate));
    const double c = cfg.speed_of_sound;
    {
        const double ddx = source[0] - receiver.x;
        const double ddy = source[1] - receiver.y;
        const double direct = std::max(std::hypot(ddx, ddy), cfg.min_distance);
        if (direct / c * cfg.sample_rate + kSincHalfWidth >= static_cast<double>(n_samples)) {
            throw ConfigError("simulate_rir: rir length too short for the direct path");
        }
    }

    // Pressure reflection coefficients per surface.
    std::array<double, 6> beta{};
    for (int i = 0; i < 6; ++i) beta[i] = std::sqrt(1.0 - room.wall_absorption[i]);

    const Vec3 src{source[0], source[1], room.agent_height};
    const double hx = std::cos(receiver.theta);
    const double hy = std::sin(receiver.theta);
    // Left ear offset is +90 degrees from the heading.
    const double half_b = cfg.ear_baseline / 2.0;
    const Vec3 ear_pos[2] = {
        {receiver.x - hy * half_b, receiver.y + hx * half_b, room.agent_height},
        {receiver.x + hy * half_b, receiver.y - hx * half_b, room.agent_height},
    };
    const double axis_angle[2] = {receiver.theta + cfg.ear_axis_angle,
                                  receiver.theta - cfg.ear_axis_angle};

    BinauralRir rir;
    rir.sample_rate = cfg.sample_rate;
    rir.left.assign(n_samples, 0.0);
    rir.right.assign(n_samples, 0.0);

    const double room_dims[3] = {room.width, room.depth, room.height};
    const double max_dist = (static_cast<double>(n_samples) / cfg.sample_rate) * c +
                            c * kSincHalfWidth / cfg.sample_rate;
    int bound[3];
    for (int d = 0; d < 3; ++d) {
        const int by_dist = static_cast<int>(
            std::ceil((max_dist + room_dims[d]) / (2.0 * room_dims[d])));
        const int by_order = cfg.max_reflection_order / 2 + 1;
        bound[d] = std::min(by_dist, by_order);
    }

    const double src_c[3] = {src.x, src.y, src.z};
    for (int mx = -bound[0]; mx <= bound[0]; ++mx) {
        for (int my = -bound[1]; my <= bound[1]; ++my) {
            for (int mz = -bound[2]; mz <= bound[2]; ++mz) {
                for (int q = 0; q <= 1; ++q) {
                    for (int j = 0; j <= 1; ++j) {
                        for (int k = 0; k <= 1; ++k) {
                            const int order = std::abs(2 * mx - q) +
                                              std::abs(2 * my - j) +
                                              std::abs(2 * mz - k);
                            if (order > cfg.max_reflection_order) continue;
                            const double img[3] = {
                                (1 - 2 * q) * src_c[0] + 2.0 * mx * room_dims[0],
                                (1 - 2 * j) * src_c[1] + 2.0 * my * room_dims[1],
                                (1 - 2 * k) * src_c[2] + 2.0 * mz * room_dims[2],
                            };
                            const double coeff =
                                std::pow(beta[0], std::abs(mx - q)) *
                                std::pow(beta[1], std::abs(mx)) *
                                std::pow(beta[2], std::abs(my - j)) *
                                std::pow(beta[3], std::abs(my)) *
                                std::pow(beta[4], std::abs(mz - k)) *
                                std::pow(beta[5], std::abs(mz));
                            if (coeff == 0.0) continue;
                            for (int ear = 0; ear < 2; ++ear) {
                                const double vx = img[0] - ear_pos[ear].x;
                                const double vy = img[1] - ear_pos[ear].y;
                                const double vz = img[2] - ear_pos[ear].z;
                                const double dist = std::sqrt(vx * vx + vy * vy + vz * vz);
                                const double dist_eff = std::max(dist, cfg.min_distance);
                                if (dist_eff > max_dist) continue;
                                double gain = 1.0;
                                if (cfg.ear_directivity_exponent > 0.0 && dist > 0.0) {
                                    const double ax = std::cos(axis_angle[ear]);
                                    const double ay = std::sin(axis_angle[ear]);
                                    const double cos_a = (vx * ax + vy * ay) / dist;
                                    gain = std::pow(std::max(0.0, (1.0 + cos_a) / 2.0),
                                                    cfg.ear_directivity_exponent);
                                }
                                const double amp = coeff * gain / dist_eff;
                                if (amp == 0.0) continue;
                                const double delay =
                                    dist_eff / c * cfg.sample_rate;
                                add_impulse(ear == 0 ? rir.left : rir.right,
                                            delay, amp);
                            }
                        }
                    }
                }
            }
        }
    }
    return rir;
}

BinauralRir simulate_echo(const RoomSpec& room, const Pose& pose,
                          const SimCfg& cfg) {
    return simulate_rir(room, {pose.x, pose.y}, pose, cfg);
}

BinauralRir add_ambient_noise(const BinauralRir& echo, NoiseKind kind,
                              double snr_db, uint64_t seed) {
    echo.validate();
    if (std::isinf(snr_db) && snr_db > 0.0) return echo;
    if (!std::isfinite(snr_db)) throw ConfigError("ambient noise: snr must be finite or +inf");
    const double e_signal = echo.energy();
    if (!(e_signal > 0.0)) {
        throw DegenerateInputError("ambient noise: echo has zero energy");
    }

    const size_t len = echo.length();
    Rng rng(derive_seed(seed, {0x6e6f697365ULL}));
    std::vector<std::vector<double>> noise(2, std::vector<double>(len, 0.0));

    if (kind == NoiseKind::white) {
        for (auto& ch : noise) {
            for (double& v : ch) v = rng.normal();
        }
    } else {
        // Band-limited burst: noise confined to a random time span and a
        // random frequency band.
        const size_t burst_len = static_cast<size_t>(
            rng.uniform(0.2, 0.6) * static_cast<double>(len));
        const size_t start = rng.uniform_int(len - burst_len + 1);
        const double nyquist = echo.sample_rate / 2.0;
        const double f_lo = rng.uniform(100.0, 0.3 * nyquist);
        const double f_hi = rng.uniform(f_lo + 200.0, 0.9 * nyquist);
        int n = 1;
        while (static_cast<size_t>(n) < len) n *= 2;
        for (auto& ch : noise) {
            std::vector<double> burst(len, 0.0);
            for (size_t i = start; i < start + burst_len; ++i) burst[i] = rng.normal();
            auto bins = fft::rfft(burst, n);
            const double bin_hz = static_cast<double>(echo.sample_rate) / n;
            for (size_t b = 0; b < bins.size(); ++b) {
                const double f = static_cast<double>(b) * bin_hz;
                if (f < f_lo || f > f_hi) bins[b] = 0.0;
            }
            auto filtered = fft::irfft(bins, n);
            std::copy(filtered.begin(), filtered.begin() + static_cast<long>(len),
                      ch.begin());
        }
    }

    double e_noise = 0.0;
    for (const auto& ch : noise) {
        for (double v : ch) e_noise += v * v;
    }
    if (!(e_noise > 0.0)) throw DegenerateInputError("ambient noise: zero-energy noise draw");
    const double scale = std::sqrt(e_signal / (e_noise * std::pow(10.0, snr_db / 10.0)));

    BinauralRir out = echo;
    for (size_t i = 0; i < len; ++i) {
        out.left[i] += scale * noise[0][i];
        out.right[i] += scale * noise[1][i];
    }
    return out;
}

}  // namespace fsrir
