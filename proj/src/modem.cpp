#include "loraflow/modem.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "loraflow/kernels.hpp"
#include "loraflow/rng.hpp"

namespace loraflow {

std::string to_string(ChirpDirection d) {
    return d == ChirpDirection::Up ? "up" : "down";
}

ChirpDirection direction_from_string(const std::string& s) {
    if (s == "up") return ChirpDirection::Up;
    if (s == "down") return ChirpDirection::Down;
    throw std::invalid_argument("unknown chirp direction: " + s);
}

void LoRaParams::validate() const {
    if (sf < 5 || sf > 12)
        throw std::invalid_argument("sf must be in [5, 12], got " + std::to_string(sf));
    if (!(bw > 0.0))
        throw std::invalid_argument("bw must be positive");
}

IqBuffer base_chirp(const LoRaParams& params) {
    params.validate();
    const int64_t n = params.symbol_len();
    const double t0 = -0.5 * params.symbol_duration();
    const double k = params.chirp_rate();
    const double sign = params.direction == ChirpDirection::Up ? 1.0 : -1.0;
    IqBuffer out(n);
    for (int64_t i = 0; i < n; ++i) {
        const double t = t0 + static_cast<double>(i) / params.bw;
        const double phase = sign * 2.0 * M_PI * (-0.5 * params.bw * t + 0.5 * k * t * t);
        out[i] = cplx(std::cos(phase), std::sin(phase));
    }
    return out;
}

IqBuffer modulate_symbol(const LoRaParams& params, int64_t m) {
    params.validate();
    const int64_t n = params.symbol_len();
    if (m < 0 || m >= n)
        throw std::invalid_argument("symbol index " + std::to_string(m) +
                                    " out of range [0, " + std::to_string(n) + ")");
    const IqBuffer base = base_chirp(params);
    IqBuffer out(n);
    for (int64_t i = 0; i < n; ++i) out[i] = base[(i + m) % n];
    return out;
}

IqBuffer add_awgn(const IqBuffer& signal, double snr_db, uint64_t seed) {
    if (std::isinf(snr_db) && snr_db > 0.0) return signal;
    const double sigma = std::pow(10.0, -snr_db / 20.0);
    Rng rng(seed);
    IqBuffer out(signal.size());
    for (size_t i = 0; i < signal.size(); ++i) out[i] = signal[i] + sigma * rng.cgaussian();
    return out;
}

DemodResult dechirp_demod(const LoRaParams& params, const IqBuffer& signal) {
    params.validate();
    const int64_t n = params.symbol_len();
    if (static_cast<int64_t>(signal.size()) != n)
        throw std::invalid_argument("dechirp_demod: signal length " +
                                    std::to_string(signal.size()) + " != 2^sf = " +
                                    std::to_string(n));
    const IqBuffer ref = base_chirp(params);
    IqBuffer d(n);
    for (int64_t i = 0; i < n; ++i) d[i] = signal[i] * std::conj(ref[i]);
    kernels::fft_inplace(d.data(), n, false);
    // A shift by m lands on FFT bin +m for up-chirps and -m for down-chirps;
    // scanning in symbol order keeps ties breaking toward the smallest index.
    DemodResult best;
    best.symbol = 0;
    best.peak_magnitude = std::abs(d[0]);
    for (int64_t m = 1; m < n; ++m) {
        const int64_t bin = params.direction == ChirpDirection::Up ? m : n - m;
        const double mag = std::abs(d[bin]);
        if (mag > best.peak_magnitude) {
            best.peak_magnitude = mag;
            best.symbol = m;
        }
    }
    return best;
}

int64_t correlation_oracle_demod(const LoRaParams& params, const IqBuffer& signal) {
    params.validate();
    const int64_t n = params.symbol_len();
    if (static_cast<int64_t>(signal.size()) != n)
        throw std::invalid_argument("correlation_oracle_demod: signal length mismatch");
    const IqBuffer base = base_chirp(params);
    int64_t best_m = 0;
    double best_mag = -1.0;
    for (int64_t m = 0; m < n; ++m) {
        cplx acc(0.0, 0.0);
        for (int64_t i = 0; i < n; ++i) acc += signal[i] * std::conj(base[(i + m) % n]);
        const double mag = std::abs(acc);
        if (mag > best_mag) {
            best_mag = mag;
            best_m = m;
        }
    }
    return best_m;
}

double symbol_error_rate(std::span<const int64_t> truth, std::span<const int64_t> pred) {
    if (truth.size() != pred.size())
        throw std::invalid_argument("symbol_error_rate: length mismatch");
    if (truth.empty()) return 0.0;
    int64_t errors = 0;
    for (size_t i = 0; i < truth.size(); ++i) errors += (truth[i] != pred[i]) ? 1 : 0;
    return static_cast<double>(errors) / static_cast<double>(truth.size());
}

}  // namespace loraflow
