#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "loraflow/iq.hpp"
#include "loraflow/modem.hpp"
#include "loraflow/rng.hpp"

namespace loraflow {

enum class SampleSource { Synthetic, Real };

struct SampleRecord {
    IqBuffer iq;
    int64_t label = 0;
    int sf = 7;
    ChirpDirection direction = ChirpDirection::Up;
    SampleSource source = SampleSource::Synthetic;
};

/// One clean record per symbol for each SF and direction; uniform class
/// coverage by construction.
std::vector<SampleRecord> generate_synthetic(const std::vector<int>& sf_set, double bw);
std::vector<SampleRecord> generate_synthetic(const std::vector<int>& sf_set, double bw,
                                             std::span<const ChirpDirection> directions);

/// Dataset file pair: `path` holds interleaved little-endian float32 I/Q
/// samples (count * 2^sf complex values), `path.json` is the sidecar
/// {version, sf, bw, direction, count, labels[]}. All records in one file
/// share (sf, direction).
void save_dataset(const std::string& path, std::span<const SampleRecord> records, double bw);

/// Raw load; throws distinct errors for a malformed sidecar, a payload whose
/// byte size disagrees with the header, and out-of-range labels.
std::vector<SampleRecord> load_dataset(const std::string& path, SampleSource source);

/// load_dataset tagged source=real, with each record normalized to unit
/// average power (keeps the SNR<->t calibration meaningful for captures).
std::vector<SampleRecord> load_real(const std::string& path);

/// Fine-tuning stream: with probability p_real picks a uniformly random
/// class among those with real coverage (then one of its real samples),
/// otherwise a uniformly random synthetic record. Classes without real
/// samples are only ever served synthetically.
class MixtureSampler {
public:
    MixtureSampler(std::vector<SampleRecord> real, std::vector<SampleRecord> synth,
                   double p_real, uint64_t seed);

    const SampleRecord& next();

    int64_t draws() const { return draws_; }
    int64_t real_draws() const { return real_draws_; }
    double real_fraction() const {
        return draws_ == 0 ? 0.0 : static_cast<double>(real_draws_) / static_cast<double>(draws_);
    }

private:
    std::vector<SampleRecord> real_;
    std::vector<SampleRecord> synth_;
    std::vector<std::vector<size_t>> real_by_class_;  // class -> indices into real_
    Rng rng_;
    double p_real_;
    int64_t draws_ = 0;
    int64_t real_draws_ = 0;
};

}  // namespace loraflow
