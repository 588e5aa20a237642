#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "loraflow/iq.hpp"
#include "loraflow/modem.hpp"

namespace loraflow {

/// One STFT resolution. The window is always a periodic Hann.
struct StftConfig {
    int64_t window_size = 64;
    int64_t hop = 16;

    void validate() const;  // power-of-two window, 0 < hop <= window
};

/// Complex STFT grid, axes (frequency bin, time frame). Frames are centered:
/// the signal is reflection-padded by window/2 on both sides, frame m starts
/// at m*hop in the padded signal, and frames = 1 + floor(len/hop).
struct Spectrogram {
    int64_t bins = 0;
    int64_t frames = 0;
    int64_t signal_len = 0;
    std::vector<cplx> data;  // frame-major: data[frame * bins + bin]

    cplx& at(int64_t bin, int64_t frame) { return data[frame * bins + bin]; }
    const cplx& at(int64_t bin, int64_t frame) const { return data[frame * bins + bin]; }
};

Spectrogram stft(const IqBuffer& signal, const StftConfig& cfg);

/// Least-squares overlap-add inverse; exact round-trip for spectrograms that
/// came from stft with the same config.
IqBuffer istft(const Spectrogram& spec, const StftConfig& cfg);

std::vector<double> hann_window(int64_t n);

/// Mean elementwise Huber loss: 0.5 d^2 for |d| <= delta, else
/// delta (|d| - 0.5 delta).
double huber(std::span<const double> a, std::span<const double> b, double delta);

inline constexpr double kHuberDelta = 1.0;

/// Huber distance between the length-N FFTs of the two signals after
/// dechirping each with the conjugate base chirp, taken over stacked
/// real/imag parts.
double fft_loss(const IqBuffer& pred, const IqBuffer& target, const LoRaParams& params);

/// Sum over scales of the Huber distance between STFTs (stacked real/imag).
double multiscale_stft_loss(const IqBuffer& pred, const IqBuffer& target,
                            std::span<const StftConfig> scales);

/// Default resolutions for one symbol at the given SF: windows
/// 2^(sf-2), 2^(sf-1), 2^sf with hop = window/4, e.g. {(32,8),(64,16),(128,32)}
/// at SF7.
std::vector<StftConfig> default_stft_scales(int sf);

}  // namespace loraflow
