#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "loraflow/condition.hpp"
#include "loraflow/iq.hpp"
#include "loraflow/spectral.hpp"

namespace loraflow {

/// Which augmentations actually modified the buffer. The seventh slot is
/// reserved (always off) to keep the 8-dim condition layout.
struct AugmentFlags {
    bool fd_mask_time = false;
    bool fd_mask_freq = false;
    bool time_roll = false;
    bool inversion = false;
    bool spec_roll_time = false;
    bool spec_roll_freq = false;
    bool reserved = false;
};

struct AugmentConfig {
    double base_prob = 0.15;
    int max_num_masks = 2;
    int max_mask_size = 2;
    double dropout_prob = 0.10;
    StftConfig masking_stft{64, 16};

    /// Masking resolution per SF: window min(64, 2^(sf-1)), hop window/4.
    static AugmentConfig for_sf(int sf);
};

/// Instrumentation counters for the masking statistics tests.
struct MaskStats {
    std::vector<int> num_masks;  // one entry per (dimension, component) pass
    std::vector<int> sizes;      // one entry per mask
};

/// Frequency-domain masking over the STFT grid: for each dimension
/// (time, frequency) and each component (real, imaginary) independently,
/// 1..max_num_masks masks of 1..max_mask_size bins are multiplied by 0
/// (probability 1/2) or a uniform value in (0, 0.5).
std::pair<IqBuffer, AugmentFlags> frequency_domain_masking(const IqBuffer& signal,
                                                           const AugmentConfig& cfg,
                                                           uint64_t seed,
                                                           MaskStats* stats = nullptr);

struct AugmentResult {
    IqBuffer iq;
    int64_t label = 0;
    AugmentFlags flags;
};

/// Applies the augmentation chain, each firing independently with
/// probability base_prob: masking per STFT dimension, a cyclic time roll
/// (which relabels the symbol), global sign inversion, and +-1 spectrogram
/// rolls. Deterministic given the seed.
AugmentResult apply_augmentations(const IqBuffer& signal, int64_t label,
                                  const AugmentConfig& cfg, uint64_t seed,
                                  MaskStats* stats = nullptr);

/// Maps flags to +-1 entries plus the SF slot (sf-7)/3; the whole vector is
/// zeroed with probability dropout_prob.
CondVector build_condition(const AugmentFlags& flags, int sf, const AugmentConfig& cfg,
                           uint64_t seed);

}  // namespace loraflow
