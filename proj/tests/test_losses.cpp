#include <doctest.h>

#include <cmath>

#include "fsrir/losses.hpp"
#include "fsrir/rng.hpp"

using namespace fsrir;

namespace {

Spectrogram random_log_spec(int bins, int frames, Rng& rng, double scale = 1.0) {
    Spectrogram spec;
    spec.n_bins = bins;
    spec.n_frames = frames;
    spec.domain = SpecDomain::log;
    spec.cfg = desk_stft_cfg();
    spec.data.resize(2ull * bins * frames);
    for (double& v : spec.data) {
        // Bounded away from 0 so finite differences never cross the
        // exp_mag clamp or an |.| tie.
        double x = rng.normal() * scale;
        if (std::abs(x) < 1e-2) x = x < 0 ? x - 1e-2 : x + 1e-2;
        v = x + 0.8;
    }
    return spec;
}

// Central-difference oracle for any loss term on the prediction.
template <class LossFn>
double fd_max_rel_err(const Spectrogram& pred, LossFn&& f, int samples, Rng& rng,
                      double h = 1e-6) {
    const auto base = f(pred);
    double worst = 0.0;
    for (int s = 0; s < samples; ++s) {
        const size_t j = static_cast<size_t>(rng.uniform_int(pred.data.size()));
        Spectrogram p = pred;
        p.data[j] += h;
        const double f_plus = f(p).value;
        p.data[j] -= 2.0 * h;
        const double f_minus = f(p).value;
        const double numeric = (f_plus - f_minus) / (2.0 * h);
        const double analytic = base.grad[j];
        const double rel = std::abs(analytic - numeric) /
                           std::max(1e-8, std::abs(analytic) + std::abs(numeric));
        worst = std::max(worst, rel);
    }
    return worst;
}

}  // namespace

TEST_CASE("l1 loss identities") {
    Rng rng(1);
    const auto target = random_log_spec(8, 10, rng);
    const auto zero = l1_loss(target, target);
    CHECK(zero.value == 0.0);
    for (double g : zero.grad) CHECK(g == 0.0);

    Spectrogram shifted = target;
    for (double& v : shifted.data) v += 0.25;
    const auto off = l1_loss(shifted, target);
    CHECK(off.value == doctest::Approx(0.25).epsilon(1e-12));
    const double expect = 1.0 / static_cast<double>(target.data.size());
    for (double g : off.grad) CHECK(g == doctest::Approx(expect));
}

TEST_CASE("l1 gradient matches finite differences away from ties") {
    Rng rng(2);
    const auto target = random_log_spec(6, 9, rng);
    auto pred = random_log_spec(6, 9, rng);
    const double err = fd_max_rel_err(
        pred, [&](const Spectrogram& p) { return l1_loss(p, target); }, 50, rng);
    CHECK(err <= 1e-4);
}

TEST_CASE("energy decay loss is zero at the target and masks zero tails") {
    Rng rng(3);
    auto target_log = random_log_spec(8, 12, rng);
    // Zero tail after frame 7 in both channels (linear zeros are log zeros).
    for (int ch = 0; ch < 2; ++ch) {
        for (int f = 0; f < 8; ++f) {
            for (int t = 8; t < 12; ++t) target_log.at(ch, f, t) = 0.0;
        }
    }
    LossCfg cfg;
    const auto self = energy_decay_loss(target_log, exp_mag(target_log), cfg);
    CHECK(self.value == 0.0);

    // Prediction with a non-positive log tail: perturbing the tail inside
    // the clamp region leaves the loss untouched (mask plus clamp).
    auto pred = random_log_spec(8, 12, rng);
    for (int ch = 0; ch < 2; ++ch) {
        for (int f = 0; f < 8; ++f) {
            for (int t = 8; t < 12; ++t) pred.at(ch, f, t) = -0.5;
        }
    }
    const auto base = energy_decay_loss(pred, exp_mag(target_log), cfg);
    auto perturbed = pred;
    for (int ch = 0; ch < 2; ++ch) {
        for (int f = 0; f < 8; ++f) {
            for (int t = 8; t < 12; ++t) perturbed.at(ch, f, t) = -0.1 - 0.05 * f;
        }
    }
    const auto after = energy_decay_loss(perturbed, exp_mag(target_log), cfg);
    CHECK(after.value == base.value);

    // Masked frames contribute no gradient of their own: a target that is
    // zero everywhere beyond frame 0 yields gradient only through frame 0.
    for (int t = 8; t < 12; ++t) {
        for (int ch = 0; ch < 2; ++ch) {
            for (int f = 0; f < 8; ++f) {
                // Tail entries sit in the clamp region, so they carry none.
                CHECK(base.grad[static_cast<size_t>((ch * 8 + f) * 12 + t)] == 0.0);
            }
        }
    }
}

TEST_CASE("energy decay loss gradient matches finite differences") {
    Rng rng(4);
    const auto target = random_log_spec(6, 10, rng);
    const auto target_lin = exp_mag(target);
    LossCfg cfg;
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        auto pred = random_log_spec(6, 10, rng, 0.8);
        const double err = fd_max_rel_err(
            pred,
            [&](const Spectrogram& p) { return energy_decay_loss(p, target_lin, cfg); },
            4, rng);
        worst = std::max(worst, err);
    }
    CHECK(worst <= 1e-4);
}

TEST_CASE("energy decay loss accepts log-domain targets") {
    Rng rng(5);
    const auto target = random_log_spec(4, 6, rng);
    auto pred = random_log_spec(4, 6, rng);
    const auto via_log = energy_decay_loss(pred, target, LossCfg{});
    const auto via_lin = energy_decay_loss(pred, exp_mag(target), LossCfg{});
    CHECK(via_log.value == doctest::Approx(via_lin.value));
}

TEST_CASE("inflating an already-dominant prediction increases the decay loss") {
    Rng rng(6);
    const auto target = random_log_spec(6, 8, rng, 0.3);
    auto pred = target;
    for (double& v : pred.data) v += 0.4;  // decay curve dominates everywhere
    const auto base = energy_decay_loss(pred, exp_mag(target), LossCfg{});
    auto inflated = pred;
    for (double& v : inflated.data) v += 0.2;
    const auto more = energy_decay_loss(inflated, exp_mag(target), LossCfg{});
    CHECK(more.value > base.value);
}

TEST_CASE("decay loss gradient stays finite on adversarial exact ties") {
    Rng rng(7);
    auto target = random_log_spec(4, 6, rng);
    auto pred = target;  // exact tie everywhere
    const auto r = energy_decay_loss(pred, exp_mag(target), LossCfg{});
    CHECK(r.value == 0.0);
    for (double g : r.grad) {
        CHECK(std::isfinite(g));
        CHECK(g == 0.0);
    }
}

TEST_CASE("total loss combines terms linearly with the paper default weight") {
    LossCfg cfg;
    CHECK(cfg.lambda_d == doctest::Approx(1e-2));

    Rng rng(8);
    const auto target = random_log_spec(6, 8, rng);
    const auto pred = random_log_spec(6, 8, rng);

    const auto combined = total_loss(pred, target, cfg);
    CHECK(combined.total ==
          doctest::Approx(combined.l1 + cfg.lambda_d * combined.l_d).epsilon(1e-9));

    LossCfg no_ld = cfg;
    no_ld.lambda_d = 0.0;
    const auto l1_only = total_loss(pred, target, no_ld);
    CHECK(l1_only.total == l1_only.l1);

    const auto l1_term = l1_loss(pred, target);
    const auto ld_term = energy_decay_loss(pred, exp_mag(target), cfg);
    for (size_t i = 0; i < combined.grad.size(); ++i) {
        CHECK(combined.grad[i] ==
              doctest::Approx(l1_term.grad[i] + cfg.lambda_d * ld_term.grad[i])
                  .epsilon(1e-12));
    }
}

TEST_CASE("loss nonnegativity and equality conditions") {
    Rng rng(9);
    const auto target = random_log_spec(5, 7, rng);
    for (int trial = 0; trial < 20; ++trial) {
        const auto pred = random_log_spec(5, 7, rng);
        CHECK(energy_decay_loss(pred, exp_mag(target), LossCfg{}).value >= 0.0);
    }
    CHECK(energy_decay_loss(target, exp_mag(target), LossCfg{}).value == 0.0);
}

TEST_CASE("linear-domain l1 ablation matches finite differences") {
    Rng rng(10);
    const auto target = random_log_spec(5, 6, rng);
    const auto target_lin = exp_mag(target);
    auto pred = random_log_spec(5, 6, rng);
    const double err = fd_max_rel_err(
        pred,
        [&](const Spectrogram& p) {
            LossTerm<double> term = l1_loss_linear_domain(
                p.data.data(), target_lin.data.data(), p.data.size());
            return term;
        },
        50, rng);
    CHECK(err <= 1e-4);
}
