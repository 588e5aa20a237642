#include "loraflow/spectral.hpp"

#include <cmath>
#include <stdexcept>

#include "loraflow/kernels.hpp"

namespace loraflow {

void StftConfig::validate() const {
    if (window_size <= 0 || (window_size & (window_size - 1)) != 0)
        throw std::invalid_argument("stft window size must be a power of two");
    if (hop <= 0 || hop > window_size)
        throw std::invalid_argument("stft hop must satisfy 0 < hop <= window");
}

std::vector<double> hann_window(int64_t n) {
    std::vector<double> w(n);
    for (int64_t i = 0; i < n; ++i)
        w[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * static_cast<double>(i) / static_cast<double>(n));
    return w;
}

namespace {

// Reflection padding by window/2 on each side (no repeated edge sample).
IqBuffer reflect_pad(const IqBuffer& x, int64_t pad) {
    const int64_t n = static_cast<int64_t>(x.size());
    if (pad >= n)
        throw std::invalid_argument("signal too short for stft window");
    IqBuffer p(n + 2 * pad);
    for (int64_t i = 0; i < pad; ++i) p[i] = x[pad - i];
    for (int64_t i = 0; i < n; ++i) p[pad + i] = x[i];
    for (int64_t i = 0; i < pad; ++i) p[pad + n + i] = x[n - 2 - i];
    return p;
}

}  // namespace

Spectrogram stft(const IqBuffer& signal, const StftConfig& cfg) {
    cfg.validate();
    const int64_t w = cfg.window_size;
    const int64_t n = static_cast<int64_t>(signal.size());
    if (n < w)
        throw std::invalid_argument("stft: signal shorter than window");
    const IqBuffer padded = reflect_pad(signal, w / 2);
    const std::vector<double> win = hann_window(w);

    Spectrogram spec;
    spec.bins = w;
    spec.frames = 1 + n / cfg.hop;
    spec.signal_len = n;
    spec.data.resize(spec.bins * spec.frames);
    for (int64_t f = 0; f < spec.frames; ++f) {
        cplx* frame = spec.data.data() + f * w;
        const cplx* src = padded.data() + f * cfg.hop;
        for (int64_t i = 0; i < w; ++i) frame[i] = src[i] * win[i];
    }
    kernels::fft_batch(spec.data.data(), spec.frames, w, false);
    return spec;
}

IqBuffer istft(const Spectrogram& spec, const StftConfig& cfg) {
    cfg.validate();
    const int64_t w = cfg.window_size;
    if (spec.bins != w)
        throw std::invalid_argument("istft: spectrogram bins do not match window size");
    if (spec.frames != 1 + spec.signal_len / cfg.hop)
        throw std::invalid_argument("istft: frame count does not match config");

    const std::vector<double> win = hann_window(w);
    std::vector<cplx> frames = spec.data;
    kernels::fft_batch(frames.data(), spec.frames, w, true);
    const double inv_w = 1.0 / static_cast<double>(w);

    const int64_t pad = w / 2;
    const int64_t padded_len = spec.signal_len + 2 * pad;
    IqBuffer acc(padded_len, cplx(0.0, 0.0));
    std::vector<double> envelope(padded_len, 0.0);
    for (int64_t f = 0; f < spec.frames; ++f) {
        const cplx* frame = frames.data() + f * w;
        const int64_t off = f * cfg.hop;
        for (int64_t i = 0; i < w; ++i) {
            acc[off + i] += frame[i] * inv_w * win[i];
            envelope[off + i] += win[i] * win[i];
        }
    }
    IqBuffer out(spec.signal_len);
    for (int64_t i = 0; i < spec.signal_len; ++i) {
        const double e = envelope[pad + i];
        if (e <= 0.0)
            throw std::invalid_argument("istft: zero window envelope; hop too large");
        out[i] = acc[pad + i] / e;
    }
    return out;
}

double huber(std::span<const double> a, std::span<const double> b, double delta) {
    if (a.size() != b.size())
        throw std::invalid_argument("huber: shape mismatch");
    if (!(delta > 0.0))
        throw std::invalid_argument("huber: delta must be positive");
    if (a.empty()) return 0.0;
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = std::abs(a[i] - b[i]);
        acc += d <= delta ? 0.5 * d * d : delta * (d - 0.5 * delta);
    }
    return acc / static_cast<double>(a.size());
}

namespace {

std::span<const double> as_reals(const std::vector<cplx>& x) {
    return {reinterpret_cast<const double*>(x.data()), 2 * x.size()};
}

}  // namespace

double fft_loss(const IqBuffer& pred, const IqBuffer& target, const LoRaParams& params) {
    const int64_t n = params.symbol_len();
    if (static_cast<int64_t>(pred.size()) != n || static_cast<int64_t>(target.size()) != n)
        throw std::invalid_argument("fft_loss: buffers must have length 2^sf");
    const IqBuffer ref = base_chirp(params);
    IqBuffer a(n), b(n);
    for (int64_t i = 0; i < n; ++i) {
        a[i] = pred[i] * std::conj(ref[i]);
        b[i] = target[i] * std::conj(ref[i]);
    }
    kernels::fft_inplace(a.data(), n, false);
    kernels::fft_inplace(b.data(), n, false);
    return huber(as_reals(a), as_reals(b), kHuberDelta);
}

double multiscale_stft_loss(const IqBuffer& pred, const IqBuffer& target,
                            std::span<const StftConfig> scales) {
    if (scales.empty())
        throw std::invalid_argument("multiscale_stft_loss: empty scale set");
    if (pred.size() != target.size())
        throw std::invalid_argument("multiscale_stft_loss: shape mismatch");
    double total = 0.0;
    for (const StftConfig& cfg : scales) {
        const Spectrogram sa = stft(pred, cfg);
        const Spectrogram sb = stft(target, cfg);
        total += huber(as_reals(sa.data), as_reals(sb.data), kHuberDelta);
    }
    return total;
}

std::vector<StftConfig> default_stft_scales(int sf) {
    std::vector<StftConfig> scales;
    for (int e = sf - 2; e <= sf; ++e) {
        const int64_t w = int64_t{1} << e;
        scales.push_back({w, w / 4});
    }
    return scales;
}

}  // namespace loraflow
