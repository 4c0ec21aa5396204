#include "fsrir/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "fsrir/errors.hpp"

namespace fsrir {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kDrrCapDb = 80.0;

// Least-squares slope of y over x; throws when fewer than two points.
double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const size_t n = x.size();
    if (n < 2) throw InsufficientDecayError("decay span too short for a line fit");
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (size_t i = 0; i < n; ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    const double denom = n * sxx - sx * sx;
    if (denom == 0.0) throw InsufficientDecayError("degenerate decay span");
    return (n * sxy - sx * sy) / denom;
}

// Time (seconds) for the fitted line over [lo_db, hi_db] to reach -60 dB.
double decay_time_from_fit(const EnergyDecayCurve& edc, int ch, double lo_db,
                           double hi_db) {
    const int t_count = edc.n_frames;
    const double d0 = edc.at(ch, 0);
    if (!(d0 > 0.0)) throw InsufficientDecayError("empty decay curve");

    std::vector<double> levels(static_cast<size_t>(t_count));
    for (int t = 0; t < t_count; ++t) {
        const double d = edc.at(ch, t);
        levels[static_cast<size_t>(t)] =
            d > 0.0 ? 10.0 * std::log10(d / d0)
                    : -std::numeric_limits<double>::infinity();
    }

    int t_lo = -1, t_hi = -1;
    for (int t = 0; t < t_count; ++t) {
        if (t_lo < 0 && levels[static_cast<size_t>(t)] <= lo_db) t_lo = t;
        if (levels[static_cast<size_t>(t)] <= hi_db) {
            t_hi = t;
            break;
        }
    }
    if (t_hi < 0) {
        throw InsufficientDecayError("decay curve never reaches " +
                                     std::to_string(hi_db) + " dB");
    }
    std::vector<double> xs, ys;
    for (int t = t_lo; t <= t_hi; ++t) {
        const double l = levels[static_cast<size_t>(t)];
        if (!std::isfinite(l)) continue;
        xs.push_back(static_cast<double>(t) / edc.frame_rate);
        ys.push_back(l);
    }
    const double slope = fit_slope(xs, ys);  // dB per second
    if (!(slope < 0.0)) throw InsufficientDecayError("decay curve is not decaying");
    return -60.0 / slope;
}

double parabolic_peak(const std::vector<double>& mag, long p) {
    if (p <= 0 || p + 1 >= static_cast<long>(mag.size())) return static_cast<double>(p);
    const double a = mag[static_cast<size_t>(p - 1)];
    const double b = mag[static_cast<size_t>(p)];
    const double c = mag[static_cast<size_t>(p + 1)];
    const double denom = a - 2.0 * b + c;
    if (denom == 0.0) return static_cast<double>(p);
    const double delta = 0.5 * (a - c) / denom;
    return static_cast<double>(p) + std::clamp(delta, -1.0, 1.0);
}

}  // namespace

EnergyDecayCurve energy_decay_curve(const Spectrogram& spec) {
    if (spec.domain != SpecDomain::linear) {
        throw DomainError("energy_decay_curve expects a linear-domain spectrogram");
    }
    EnergyDecayCurve edc;
    edc.n_frames = spec.n_frames;
    edc.frame_rate = spec.cfg.frame_rate();
    edc.values.assign(2ull * spec.n_frames, 0.0);
    for (int ch = 0; ch < 2; ++ch) {
        double acc = 0.0;
        for (int t = spec.n_frames - 1; t >= 0; --t) {
            double e = 0.0;
            for (int f = 0; f < spec.n_bins; ++f) {
                const double s = spec.at(ch, f, t);
                e += s * s;
            }
            acc += e;
            edc.values[static_cast<size_t>(ch) * spec.n_frames + t] = acc;
        }
    }
    return edc;
}

std::array<double, 2> rt60(const EnergyDecayCurve& edc) {
    return {decay_time_from_fit(edc, 0, -5.0, -25.0),
            decay_time_from_fit(edc, 1, -5.0, -25.0)};
}

std::array<double, 2> edt(const EnergyDecayCurve& edc) {
    return {decay_time_from_fit(edc, 0, 0.0, -10.0),
            decay_time_from_fit(edc, 1, 0.0, -10.0)};
}

std::array<double, 2> drr(const BinauralRir& rir, double direct_window_ms) {
    rir.validate();
    const long w = std::lround(direct_window_ms * rir.sample_rate / 1000.0);
    std::array<double, 2> out{};
    for (int ch = 0; ch < 2; ++ch) {
        const auto& x = ch == 0 ? rir.left : rir.right;
        long peak = 0;
        double peak_mag = 0.0;
        double total = 0.0;
        for (size_t i = 0; i < x.size(); ++i) {
            total += x[i] * x[i];
            const double m = std::abs(x[i]);
            if (m > peak_mag) {
                peak_mag = m;
                peak = static_cast<long>(i);
            }
        }
        if (!(total > 0.0)) throw DegenerateInputError("drr: all-zero channel");
        double direct = 0.0;
        const long lo = std::max(peak - w, 0L);
        const long hi = std::min(peak + w, static_cast<long>(x.size()) - 1);
        for (long i = lo; i <= hi; ++i) direct += x[static_cast<size_t>(i)] * x[static_cast<size_t>(i)];
        const double rev = total - direct;
        double db;
        if (rev <= 0.0) {
            db = kDrrCapDb;
        } else if (direct <= 0.0) {
            db = -kDrrCapDb;
        } else {
            db = std::clamp(10.0 * std::log10(direct / rev), -kDrrCapDb, kDrrCapDb);
        }
        out[static_cast<size_t>(ch)] = db;
    }
    return out;
}

double stft_error(const Spectrogram& pred, const Spectrogram& target) {
    pred.require_same_shape(target);
    if (pred.domain != target.domain) {
        throw DomainError("stft_error: spectrogram domains differ");
    }
    double acc = 0.0;
    for (size_t i = 0; i < pred.data.size(); ++i) {
        acc += std::abs(pred.data[i] - target.data[i]);
    }
    return acc / static_cast<double>(pred.data.size());
}

namespace {
std::array<double, 2> rt60_side(const Spectrogram& spec, const char* side) {
    try {
        return rt60(energy_decay_curve(spec));
    } catch (const InsufficientDecayError& e) {
        throw InsufficientDecayError(std::string(side) + ": " + e.what());
    }
}
}  // namespace

double rte(const Spectrogram& pred_linear, const Spectrogram& target_linear) {
    pred_linear.require_same_shape(target_linear);
    const auto p = rt60_side(pred_linear, "pred");
    const auto t = rt60_side(target_linear, "target");
    return (std::abs(p[0] - t[0]) + std::abs(p[1] - t[1])) / 2.0;
}

double rte(const BinauralRir& pred, const BinauralRir& target,
           const StftCfg& cfg) {
    return rte(stft_mag(pred, cfg), stft_mag(target, cfg));
}

double drre(const BinauralRir& pred, const BinauralRir& target,
            double direct_window_ms) {
    std::array<double, 2> p, t;
    try {
        p = drr(pred, direct_window_ms);
    } catch (const DegenerateInputError& e) {
        throw DegenerateInputError(std::string("pred: ") + e.what());
    }
    try {
        t = drr(target, direct_window_ms);
    } catch (const DegenerateInputError& e) {
        throw DegenerateInputError(std::string("target: ") + e.what());
    }
    return (std::abs(p[0] - t[0]) + std::abs(p[1] - t[1])) / 2.0;
}

std::array<double, 2> localize_source(const BinauralRir& rir,
                                      const Pose& receiver,
                                      const LocalizeCfg& cfg) {
    rir.validate();
    const int sr = rir.sample_rate;
    const size_t len = rir.length();

    std::vector<double> mag[2];
    long peak[2] = {0, 0};
    double refined[2] = {0.0, 0.0};
    for (int ch = 0; ch < 2; ++ch) {
        const auto& x = ch == 0 ? rir.left : rir.right;
        mag[ch].resize(len);
        double best = 0.0;
        for (size_t i = 0; i < len; ++i) {
            mag[ch][i] = std::abs(x[i]);
            if (mag[ch][i] > best) {
                best = mag[ch][i];
                peak[ch] = static_cast<long>(i);
            }
        }
        if (!(best > cfg.noise_floor)) {
            throw LocalizationError("no direct-path peak above the noise floor");
        }
        refined[ch] = parabolic_peak(mag[ch], peak[ch]);
    }

    const double mean_arrival = (refined[0] + refined[1]) / 2.0;
    const double distance = cfg.speed_of_sound * mean_arrival / sr;

    // Interaural delay from a windowed cross-correlation around the
    // earlier arrival, refined to sub-sample precision.
    const long w = std::lround(cfg.direct_window_ms * sr / 1000.0) + 56;
    const long center = std::min(peak[0], peak[1]);
    const long lo = std::max(center - w, 0L);
    const long hi = std::min(center + w, static_cast<long>(len) - 1);
    const long max_lag =
        static_cast<long>(std::ceil(cfg.ear_baseline / cfg.speed_of_sound * sr)) + 2;
    std::vector<double> xc(static_cast<size_t>(2 * max_lag + 1), 0.0);
    for (long lag = -max_lag; lag <= max_lag; ++lag) {
        double acc = 0.0;
        for (long i = lo; i <= hi; ++i) {
            const long j = i + lag;
            if (j < 0 || j >= static_cast<long>(len)) continue;
            acc += rir.left[static_cast<size_t>(i)] * rir.right[static_cast<size_t>(j)];
        }
        xc[static_cast<size_t>(lag + max_lag)] = acc;
    }
    long best_lag_idx = 0;
    for (size_t i = 1; i < xc.size(); ++i) {
        if (xc[i] > xc[static_cast<size_t>(best_lag_idx)]) best_lag_idx = static_cast<long>(i);
    }
    const double lag = parabolic_peak(xc, best_lag_idx) - static_cast<double>(max_lag);

    // R delayed relative to L (positive lag) means the source is on the
    // left; bearing is counterclockwise from the heading.
    const double s = std::clamp(
        cfg.speed_of_sound * (lag / sr) / std::max(cfg.ear_baseline, 1e-6), -1.0,
        1.0);
    const double phi_front = std::asin(s);
    const double phi_back = wrap_angle(kPi - phi_front);

    double phi = phi_front;
    if (cfg.ear_directivity_exponent > 0.0) {
        // Direct-window energies give the measured ILD; pick the
        // candidate whose modeled ILD is closer.
        const long dw = std::lround(cfg.direct_window_ms * sr / 1000.0);
        double energy[2] = {0.0, 0.0};
        for (int ch = 0; ch < 2; ++ch) {
            const auto& x = ch == 0 ? rir.left : rir.right;
            const long a = std::max(peak[ch] - dw, 0L);
            const long b = std::min(peak[ch] + dw, static_cast<long>(len) - 1);
            for (long i = a; i <= b; ++i) energy[ch] += x[static_cast<size_t>(i)] * x[static_cast<size_t>(i)];
        }
        const double ild_meas =
            10.0 * std::log10(std::max(energy[0], 1e-30) / std::max(energy[1], 1e-30));
        auto model_ild = [&](double bearing) {
            const double gl = std::pow(
                std::max((1.0 + std::cos(bearing - cfg.ear_axis_angle)) / 2.0, 1e-6),
                cfg.ear_directivity_exponent);
            const double gr = std::pow(
                std::max((1.0 + std::cos(bearing + cfg.ear_axis_angle)) / 2.0, 1e-6),
                cfg.ear_directivity_exponent);
            return 20.0 * std::log10(gl / gr);
        };
        if (std::abs(ild_meas - model_ild(phi_back)) <
            std::abs(ild_meas - model_ild(phi_front))) {
            phi = phi_back;
        }
    }

    const double bearing = receiver.theta + phi;
    return {receiver.x + distance * std::cos(bearing),
            receiver.y + distance * std::sin(bearing)};
}

}  // namespace fsrir
