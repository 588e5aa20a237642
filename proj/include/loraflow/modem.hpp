#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "loraflow/iq.hpp"

namespace loraflow {

enum class ChirpDirection { Up, Down };

std::string to_string(ChirpDirection d);
ChirpDirection direction_from_string(const std::string& s);

/// LoRa physical-layer parameters. The baseband is critically sampled at
/// fs = bw, so one symbol is exactly 2^sf samples and the modulating time
/// shift tau_m = m/bw is an integer number of samples.
struct LoRaParams {
    int sf = 7;
    double bw = 125000.0;
    ChirpDirection direction = ChirpDirection::Up;

    int64_t symbol_len() const { return int64_t{1} << sf; }
    double symbol_duration() const { return static_cast<double>(symbol_len()) / bw; }
    double chirp_rate() const { return bw * bw / static_cast<double>(symbol_len()); }

    /// Throws std::invalid_argument unless 5 <= sf <= 12 and bw > 0.
    void validate() const;
};

/// The unmodulated chirp: 2^sf unit-modulus samples sweeping the full
/// bandwidth, phase sign flipped for down-chirps.
IqBuffer base_chirp(const LoRaParams& params);

/// Symbol m as a cyclic shift of the base chirp by m samples.
IqBuffer modulate_symbol(const LoRaParams& params, int64_t m);

/// Adds circularly-symmetric complex Gaussian noise with per-sample variance
/// 10^(-snr_db/10). snr_db = +inf returns the signal unchanged. Deterministic
/// given the seed.
IqBuffer add_awgn(const IqBuffer& signal, double snr_db, uint64_t seed);

struct DemodResult {
    int64_t symbol = 0;
    double peak_magnitude = 0.0;
};

/// Dechirp demodulation: multiply by the conjugate reference chirp, take the
/// length-N FFT and return the argmax bin (ties break to the smallest index).
/// Inverse of modulate_symbol: dechirp_demod(modulate_symbol(m)).symbol == m.
DemodResult dechirp_demod(const LoRaParams& params, const IqBuffer& signal);

/// Exhaustive matched filter over all 2^sf candidate symbols,
/// argmax_m |<signal, modulate(m)>|. Test oracle for dechirp_demod.
int64_t correlation_oracle_demod(const LoRaParams& params, const IqBuffer& signal);

/// Fraction of positions where truth and pred disagree.
double symbol_error_rate(std::span<const int64_t> truth, std::span<const int64_t> pred);

}  // namespace loraflow
