#pragma once

#include <cmath>
#include <vector>

#include "fsrir/dsp.hpp"
#include "fsrir/errors.hpp"

namespace fsrir {

enum class L1Domain { log, linear };

struct LossCfg {
    double lambda_d = 1e-2;      // weight of the energy-decay term
    double tail_epsilon = 0.0;   // decay-curve level treated as zero
    // The L1 term defaults to the log domain, matching the head output;
    // the linear option exists for ablating that interpretation.
    L1Domain l1_domain = L1Domain::log;
};

template <class T>
struct LossTerm {
    double value = 0.0;
    std::vector<T> grad;  // w.r.t. the log-magnitude prediction
};

template <class T>
struct LossValue {
    double total = 0.0;
    double l1 = 0.0;
    double l_d = 0.0;
    std::vector<T> grad;
};

// Mean absolute error over all 2*F*T cells of two same-shape log
// spectrograms; subgradient 0 at exact ties.
template <class T>
LossTerm<T> l1_loss(const T* pred, const T* target, size_t n) {
    LossTerm<T> out;
    out.grad.assign(n, T(0));
    if (n == 0) return out;
    const double inv_n = 1.0 / static_cast<double>(n);
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
        acc += std::abs(d);
        if (d > 0.0) out.grad[i] = static_cast<T>(inv_n);
        else if (d < 0.0) out.grad[i] = static_cast<T>(-inv_n);
    }
    out.value = acc * inv_n;
    return out;
}

// L1 on linear magnitudes, differentiated back through exp_mag to the
// log-domain prediction (the ablation arm of the domain choice).
template <class T>
LossTerm<T> l1_loss_linear_domain(const T* pred_log, const T* target_linear,
                                  size_t n) {
    LossTerm<T> out;
    out.grad.assign(n, T(0));
    if (n == 0) return out;
    const double inv_n = 1.0 / static_cast<double>(n);
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double p = static_cast<double>(pred_log[i]);
        const double sp = p > 0.0 ? std::expm1(p) : 0.0;
        const double d = sp - static_cast<double>(target_linear[i]);
        acc += std::abs(d);
        if (d != 0.0 && p > 0.0) {
            out.grad[i] = static_cast<T>((d > 0.0 ? inv_n : -inv_n) * std::exp(p));
        }
    }
    out.value = acc * inv_n;
    return out;
}

// Energy-decay matching loss. The prediction arrives in log magnitudes
// and is converted to linear inside the differentiable chain; the target
// must already be linear. Per channel, the full-band envelope is
// e[t] = sum_f s[f,t]^2 and the decay curve its backward cumulative sum.
// Frames whose target decay is at or below tail_epsilon are masked out,
// so the all-zero tails of short RIRs contribute nothing.
template <class T>
LossTerm<T> energy_decay_loss(const T* pred_log, const T* target_linear,
                              int channels, int bins, int frames,
                              const LossCfg& cfg) {
    const size_t n = static_cast<size_t>(channels) * bins * frames;
    LossTerm<T> out;
    out.grad.assign(n, T(0));
    if (n == 0) return out;

    const size_t plane = static_cast<size_t>(bins) * frames;
    const double norm = 1.0 / (static_cast<double>(channels) * frames);
    std::vector<double> pred_lin(n);
    for (size_t i = 0; i < n; ++i) {
        const double p = static_cast<double>(pred_log[i]);
        pred_lin[i] = p > 0.0 ? std::expm1(p) : 0.0;
    }

    double acc = 0.0;
    std::vector<double> decay_pred(static_cast<size_t>(frames));
    std::vector<double> decay_tgt(static_cast<size_t>(frames));
    std::vector<double> cum(static_cast<size_t>(frames));
    for (int ch = 0; ch < channels; ++ch) {
        const size_t off = static_cast<size_t>(ch) * plane;
        double ap = 0.0, at = 0.0;
        for (int t = frames - 1; t >= 0; --t) {
            double ep = 0.0, et = 0.0;
            for (int f = 0; f < bins; ++f) {
                const size_t i = off + static_cast<size_t>(f) * frames + t;
                ep += pred_lin[i] * pred_lin[i];
                const double tv = static_cast<double>(target_linear[i]);
                et += tv * tv;
            }
            ap += ep;
            at += et;
            decay_pred[static_cast<size_t>(t)] = ap;
            decay_tgt[static_cast<size_t>(t)] = at;
        }
        // d(loss)/d(envelope[tau]) is the running sum of the per-frame
        // decay-curve gradients up to tau.
        double running = 0.0;
        for (int t = 0; t < frames; ++t) {
            const double dt = decay_tgt[static_cast<size_t>(t)];
            if (dt > cfg.tail_epsilon) {
                const double diff = decay_pred[static_cast<size_t>(t)] - dt;
                acc += std::abs(diff) * norm;
                if (diff > 0.0) running += norm;
                else if (diff < 0.0) running -= norm;
            }
            cum[static_cast<size_t>(t)] = running;
        }
        for (int f = 0; f < bins; ++f) {
            for (int t = 0; t < frames; ++t) {
                const size_t i = off + static_cast<size_t>(f) * frames + t;
                const double p = static_cast<double>(pred_log[i]);
                if (p > 0.0) {
                    out.grad[i] = static_cast<T>(cum[static_cast<size_t>(t)] * 2.0 *
                                                 pred_lin[i] * std::exp(p));
                }
            }
        }
    }
    out.value = acc;
    return out;
}

// L = L1 + lambda * L_D over a (prediction, target) pair of log
// spectrograms; gradients combine linearly.
template <class T>
LossValue<T> total_loss(const T* pred_log, const T* target_log, int channels,
                        int bins, int frames, const LossCfg& cfg) {
    const size_t n = static_cast<size_t>(channels) * bins * frames;
    std::vector<T> target_lin(n);
    for (size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(target_log[i]);
        target_lin[i] = static_cast<T>(t > 0.0 ? std::expm1(t) : 0.0);
    }
    LossTerm<T> l1 = cfg.l1_domain == L1Domain::log
                         ? l1_loss(pred_log, target_log, n)
                         : l1_loss_linear_domain(pred_log, target_lin.data(), n);
    LossTerm<T> ld = energy_decay_loss(pred_log, target_lin.data(), channels,
                                       bins, frames, cfg);
    LossValue<T> out;
    out.l1 = l1.value;
    out.l_d = ld.value;
    out.total = l1.value + cfg.lambda_d * ld.value;
    out.grad = std::move(l1.grad);
    const T lam = static_cast<T>(cfg.lambda_d);
    for (size_t i = 0; i < n; ++i) out.grad[i] += lam * ld.grad[i];
    return out;
}

// --- Spectrogram convenience overloads (double precision) ---------------

inline LossTerm<double> l1_loss(const Spectrogram& pred, const Spectrogram& target) {
    pred.require_same_shape(target);
    if (pred.domain != target.domain) throw DomainError("l1_loss: domains differ");
    return l1_loss(pred.data.data(), target.data.data(), pred.data.size());
}

inline LossTerm<double> energy_decay_loss(const Spectrogram& pred_log,
                                          const Spectrogram& target,
                                          const LossCfg& cfg) {
    pred_log.require_same_shape(target);
    if (pred_log.domain != SpecDomain::log) {
        throw DomainError("energy_decay_loss: prediction must be log-domain");
    }
    if (target.domain == SpecDomain::linear) {
        return energy_decay_loss(pred_log.data.data(), target.data.data(), 2,
                                 pred_log.n_bins, pred_log.n_frames, cfg);
    }
    const Spectrogram lin = exp_mag(target);
    return energy_decay_loss(pred_log.data.data(), lin.data.data(), 2,
                             pred_log.n_bins, pred_log.n_frames, cfg);
}

inline LossValue<double> total_loss(const Spectrogram& pred_log,
                                    const Spectrogram& target_log,
                                    const LossCfg& cfg) {
    pred_log.require_same_shape(target_log);
    if (pred_log.domain != SpecDomain::log || target_log.domain != SpecDomain::log) {
        throw DomainError("total_loss expects log-domain spectrograms");
    }
    return total_loss(pred_log.data.data(), target_log.data.data(), 2,
                      pred_log.n_bins, pred_log.n_frames, cfg);
}

}  // namespace fsrir
