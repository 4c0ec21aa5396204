#include "fsrir/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "fsrir/errors.hpp"
#include "fsrir/fft.hpp"
#include "fsrir/io.hpp"

namespace fsrir {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 2.0 * kPi;

int ms_to_samples(double ms, int sample_rate) {
    return static_cast<int>(std::lround(ms * sample_rate / 1000.0));
}

// Periodic Hann window of length W.
std::vector<double> hann_window(int w) {
    std::vector<double> win(static_cast<size_t>(w));
    for (int n = 0; n < w; ++n) {
        win[static_cast<size_t>(n)] =
            0.5 - 0.5 * std::cos(kTwoPi * n / static_cast<double>(w));
    }
    return win;
}
}  // namespace

void BinauralRir::validate() const {
    if (left.size() != right.size()) {
        throw ShapeError("binaural RIR channels differ in length");
    }
    if (left.empty()) throw ShapeError("binaural RIR is empty");
    for (const auto* ch : {&left, &right}) {
        for (double v : *ch) {
            if (!std::isfinite(v)) throw DegenerateInputError("non-finite RIR sample");
        }
    }
}

double BinauralRir::energy() const {
    double e = 0.0;
    for (double v : left) e += v * v;
    for (double v : right) e += v * v;
    return e;
}

int StftCfg::win_samples() const { return ms_to_samples(win_len_ms, sample_rate); }
int StftCfg::hop_samples() const { return ms_to_samples(hop_ms, sample_rate); }

int StftCfg::n_frames(size_t signal_len) const {
    const int pad = fft_size / 2;
    const long padded = static_cast<long>(signal_len) + 2L * pad;
    return static_cast<int>((padded - fft_size) / hop_samples() + 1);
}

double StftCfg::frame_rate() const {
    return static_cast<double>(sample_rate) / hop_samples();
}

void StftCfg::validate() const {
    if (sample_rate <= 0) throw ConfigError("stft: sample rate must be positive");
    const int win = win_samples();
    const int hop = hop_samples();
    if (win <= 0 || hop <= 0) throw ConfigError("stft: window and hop must be positive");
    if (hop >= win) throw ConfigError("stft: hop must be smaller than the window");
    if (fft_size < win) throw ConfigError("stft: fft size must cover the window");
}

StftCfg desk_stft_cfg() {
    StftCfg cfg;
    cfg.win_len_ms = 7.9375;  // 127 samples at 16 kHz
    cfg.hop_ms = 7.875;       // 126 samples
    cfg.fft_size = 127;       // 64 bins; 64 frames for a 0.5 s RIR
    cfg.sample_rate = 16000;
    return cfg;
}

void Spectrogram::require_same_shape(const Spectrogram& other) const {
    if (n_bins != other.n_bins || n_frames != other.n_frames) {
        throw ShapeError("spectrogram shapes differ");
    }
}

void SweepCfg::validate(int sample_rate) const {
    if (!(f_start > 0.0) || !(f_end > f_start)) {
        throw ConfigError("sweep: need 0 < f_start < f_end");
    }
    if (f_end > sample_rate / 2.0) {
        throw ConfigError("sweep: f_end exceeds the Nyquist frequency");
    }
    if (!(duration > 0.0)) throw ConfigError("sweep: duration must be positive");
    if (fade_in_ms < 0.0 || fade_out_ms < 0.0) {
        throw ConfigError("sweep: fades must be >= 0");
    }
    if ((fade_in_ms + fade_out_ms) / 1000.0 > duration) {
        throw ConfigError("sweep: fades exceed the sweep duration");
    }
}

std::vector<double> ess_sweep(const SweepCfg& cfg, int sample_rate) {
    cfg.validate(sample_rate);
    const size_t len = static_cast<size_t>(std::lround(cfg.duration * sample_rate));
    const double rate_log = std::log(cfg.f_end / cfg.f_start);
    const double sweep_l = cfg.duration / rate_log;
    const double k = kTwoPi * cfg.f_start * sweep_l;
    std::vector<double> x(len);
    for (size_t i = 0; i < len; ++i) {
        const double t = static_cast<double>(i) / sample_rate;
        x[i] = cfg.amplitude * std::sin(k * (std::exp(t / sweep_l) - 1.0));
    }
    const size_t fade_in = static_cast<size_t>(std::lround(cfg.fade_in_ms * sample_rate / 1000.0));
    const size_t fade_out = static_cast<size_t>(std::lround(cfg.fade_out_ms * sample_rate / 1000.0));
    for (size_t i = 0; i < fade_in && i < len; ++i) {
        x[i] *= 0.5 - 0.5 * std::cos(kPi * static_cast<double>(i) / fade_in);
    }
    for (size_t i = 0; i < fade_out && i < len; ++i) {
        x[len - 1 - i] *= 0.5 - 0.5 * std::cos(kPi * static_cast<double>(i) / fade_out);
    }
    return x;
}

std::vector<double> inverse_filter(std::span<const double> sweep,
                                   const SweepCfg& cfg, int sample_rate) {
    cfg.validate(sample_rate);
    if (sweep.empty()) throw ShapeError("inverse_filter: empty sweep");
    const size_t len = sweep.size();
    const double sweep_l = cfg.duration / std::log(cfg.f_end / cfg.f_start);
    std::vector<double> inv(len);
    // Reversed sweep with an exponential envelope that compensates the
    // 1/f energy density of the sweep (+6 dB/octave).
    for (size_t i = 0; i < len; ++i) {
        const double t = static_cast<double>(i) / sample_rate;
        inv[i] = sweep[len - 1 - i] * std::exp(-t / sweep_l);
    }
    // Normalize to unit passband gain: a band-limited pulse's time peak
    // under-represents its in-band level, so measure the spectrum of the
    // compressed pulse over the sweep band interior.
    auto probe = fft::convolve_full(sweep, inv);
    int n = 1;
    while (static_cast<size_t>(n) < probe.size()) n *= 2;
    const auto bins = fft::rfft(probe, n);
    const double bin_hz = static_cast<double>(sample_rate) / n;
    double gain_sum = 0.0;
    size_t gain_count = 0;
    for (size_t b = 0; b < bins.size(); ++b) {
        const double f = static_cast<double>(b) * bin_hz;
        if (f >= 2.0 * cfg.f_start && f <= 0.8 * cfg.f_end) {
            gain_sum += std::abs(bins[b]);
            ++gain_count;
        }
    }
    if (gain_count == 0 || !(gain_sum > 0.0)) {
        throw DegenerateInputError("inverse_filter: empty passband");
    }
    const double gain = gain_sum / static_cast<double>(gain_count);
    for (double& v : inv) v /= gain;
    return inv;
}

BinauralRir measure_rir(const BinauralRir& recorded,
                        std::span<const double> sweep, const SweepCfg& cfg,
                        double rir_length_s) {
    recorded.validate();
    if (recorded.length() < sweep.size()) {
        throw ShapeError("measure_rir: recording shorter than the sweep");
    }
    const auto inv = inverse_filter(sweep, cfg, recorded.sample_rate);
    const size_t rir_len =
        static_cast<size_t>(std::lround(rir_length_s * recorded.sample_rate));
    BinauralRir rir;
    rir.sample_rate = recorded.sample_rate;
    for (const auto* in : {&recorded.left, &recorded.right}) {
        auto y = fft::convolve_full(*in, inv);
        std::vector<double> ch(rir_len, 0.0);
        const size_t start = sweep.size() - 1;
        for (size_t i = 0; i < rir_len && start + i < y.size(); ++i) {
            ch[i] = y[start + i];
        }
        if (in == &recorded.left) rir.left = std::move(ch);
        else rir.right = std::move(ch);
    }
    return rir;
}

Spectrogram stft_mag(const BinauralRir& rir, const StftCfg& cfg) {
    cfg.validate();
    rir.validate();
    if (rir.sample_rate != cfg.sample_rate) {
        throw ConfigError("stft_mag: sample rate mismatch");
    }
    const size_t len = rir.length();
    const int win = cfg.win_samples();
    if (len < static_cast<size_t>(win)) {
        throw ShapeError("stft_mag: signal shorter than one window");
    }
    const int fft_n = cfg.fft_size;
    const int hop = cfg.hop_samples();
    const int pad = fft_n / 2;
    const int n_frames = cfg.n_frames(len);
    const int n_bins = cfg.n_bins();

    const auto win_vals = hann_window(win);
    const int win_off = (fft_n - win) / 2;

    Spectrogram spec;
    spec.n_bins = n_bins;
    spec.n_frames = n_frames;
    spec.domain = SpecDomain::linear;
    spec.cfg = cfg;
    spec.data.assign(2ull * n_bins * n_frames, 0.0);

    std::vector<double> frame(static_cast<size_t>(fft_n));
    for (int ch = 0; ch < 2; ++ch) {
        const auto& x = ch == 0 ? rir.left : rir.right;
        for (int m = 0; m < n_frames; ++m) {
            std::fill(frame.begin(), frame.end(), 0.0);
            const long base = static_cast<long>(m) * hop - pad;  // signal index of frame start
            for (int j = 0; j < win; ++j) {
                const long idx = base + win_off + j;
                if (idx >= 0 && idx < static_cast<long>(len)) {
                    frame[static_cast<size_t>(win_off + j)] =
                        x[static_cast<size_t>(idx)] * win_vals[static_cast<size_t>(j)];
                }
            }
            const auto bins = fft::rfft(frame, fft_n);
            for (int f = 0; f < n_bins; ++f) {
                spec.at(ch, f, m) = std::abs(bins[static_cast<size_t>(f)]);
            }
        }
    }
    return spec;
}

Spectrogram log_mag(const Spectrogram& spec) {
    if (spec.domain != SpecDomain::linear) {
        throw DomainError("log_mag expects a linear-domain spectrogram");
    }
    Spectrogram out = spec;
    out.domain = SpecDomain::log;
    for (double& v : out.data) v = std::log1p(v);
    return out;
}

Spectrogram exp_mag(const Spectrogram& spec) {
    if (spec.domain != SpecDomain::log) {
        throw DomainError("exp_mag expects a log-domain spectrogram");
    }
    Spectrogram out = spec;
    out.domain = SpecDomain::linear;
    for (double& v : out.data) v = std::max(std::expm1(v), 0.0);
    return out;
}

BinauralRir convolve(std::span<const double> signal, int signal_sample_rate,
                     const BinauralRir& rir) {
    rir.validate();
    if (signal_sample_rate != rir.sample_rate) {
        throw ConfigError("convolve: sample rate mismatch");
    }
    if (signal.empty()) throw ShapeError("convolve: empty signal");
    BinauralRir out;
    out.sample_rate = rir.sample_rate;
    out.left = fft::convolve_full(signal, rir.left);
    out.right = fft::convolve_full(signal, rir.right);
    return out;
}

BinauralRir zero_phase_waveform(const Spectrogram& spec, size_t out_len) {
    if (spec.domain != SpecDomain::linear) {
        throw DomainError("zero_phase_waveform expects linear magnitudes");
    }
    const StftCfg& cfg = spec.cfg;
    const int fft_n = cfg.fft_size;
    const int hop = cfg.hop_samples();
    const int half = (fft_n - 1) / 2;

    BinauralRir out;
    out.sample_rate = cfg.sample_rate;
    out.left.assign(out_len, 0.0);
    out.right.assign(out_len, 0.0);

    const auto win_vals = hann_window(cfg.win_samples());
    double win_sum = 0.0;
    for (double w : win_vals) win_sum += w;
    const double scale = static_cast<double>(hop) / win_sum;

    std::vector<std::complex<double>> bins(static_cast<size_t>(spec.n_bins));
    for (int ch = 0; ch < 2; ++ch) {
        auto& x = ch == 0 ? out.left : out.right;
        for (int m = 0; m < spec.n_frames; ++m) {
            for (int f = 0; f < spec.n_bins; ++f) {
                bins[static_cast<size_t>(f)] = {spec.at(ch, f, m), 0.0};
            }
            const auto kernel = fft::irfft(bins, fft_n);
            const long center = static_cast<long>(m) * hop;
            for (int d = -half; d <= half; ++d) {
                const long idx = center + d;
                if (idx < 0 || idx >= static_cast<long>(out_len)) continue;
                const size_t k = static_cast<size_t>((d + fft_n) % fft_n);
                x[static_cast<size_t>(idx)] += kernel[k] * scale;
            }
        }
    }
    return out;
}

void save_spectrogram(const std::filesystem::path& path,
                      const Spectrogram& spec) {
    TensorBlob blob;
    blob.dtype = 0;
    blob.dims = {2u, static_cast<uint32_t>(spec.n_bins),
                 static_cast<uint32_t>(spec.n_frames)};
    blob.f32.resize(spec.data.size());
    for (size_t i = 0; i < spec.data.size(); ++i) {
        blob.f32[i] = static_cast<float>(spec.data[i]);
    }
    save_tensor(path, blob);
}

Spectrogram load_spectrogram(const std::filesystem::path& path,
                             const StftCfg& cfg, SpecDomain domain) {
    const TensorBlob blob = load_tensor(path);
    if (blob.dims.size() != 3 || blob.dims[0] != 2) {
        throw DatasetError("spectrogram tensor must have shape [2, F, T]");
    }
    Spectrogram spec;
    spec.n_bins = static_cast<int>(blob.dims[1]);
    spec.n_frames = static_cast<int>(blob.dims[2]);
    spec.domain = domain;
    spec.cfg = cfg;
    spec.data.resize(blob.numel());
    if (blob.dtype == 0) {
        for (size_t i = 0; i < spec.data.size(); ++i) spec.data[i] = blob.f32[i];
    } else {
        for (size_t i = 0; i < spec.data.size(); ++i) spec.data[i] = blob.f64[i];
    }
    return spec;
}

}  // namespace fsrir
