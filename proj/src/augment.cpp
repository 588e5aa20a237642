#include "loraflow/augment.hpp"

#include <algorithm>
#include <stdexcept>

#include "loraflow/rng.hpp"

namespace loraflow {

AugmentConfig AugmentConfig::for_sf(int sf) {
    AugmentConfig cfg;
    const int64_t window = std::min<int64_t>(64, int64_t{1} << (sf - 1));
    cfg.masking_stft = StftConfig{window, window / 4};
    return cfg;
}

namespace {

enum class MaskDim { Time, Frequency };

// Masks one dimension of the grid, real and imaginary parts independently.
void mask_dimension(Spectrogram& spec, MaskDim dim, const AugmentConfig& cfg, Rng& rng,
                    MaskStats* stats) {
    const int64_t extent = dim == MaskDim::Time ? spec.frames : spec.bins;
    for (int comp = 0; comp < 2; ++comp) {
        const int num_masks = static_cast<int>(rng.uniform_int(1, cfg.max_num_masks));
        if (stats) stats->num_masks.push_back(num_masks);
        for (int j = 0; j < num_masks; ++j) {
            const int size = static_cast<int>(
                rng.uniform_int(1, std::min<int64_t>(cfg.max_mask_size, extent)));
            if (stats) stats->sizes.push_back(size);
            const int64_t start = rng.uniform_int(0, extent - size);
            const double value = rng.uniform() < 0.5 ? 0.0 : rng.uniform(0.0, 0.5);
            for (int64_t pos = start; pos < start + size; ++pos) {
                for (int64_t other = 0; other < (dim == MaskDim::Time ? spec.bins : spec.frames);
                     ++other) {
                    cplx& v = dim == MaskDim::Time ? spec.at(other, pos) : spec.at(pos, other);
                    if (comp == 0)
                        v = cplx(v.real() * value, v.imag());
                    else
                        v = cplx(v.real(), v.imag() * value);
                }
            }
        }
    }
}

void roll_spectrogram(Spectrogram& spec, MaskDim dim, int64_t shift) {
    Spectrogram out = spec;
    for (int64_t b = 0; b < spec.bins; ++b)
        for (int64_t f = 0; f < spec.frames; ++f) {
            if (dim == MaskDim::Time) {
                const int64_t src = ((f - shift) % spec.frames + spec.frames) % spec.frames;
                out.at(b, f) = spec.at(b, src);
            } else {
                const int64_t src = ((b - shift) % spec.bins + spec.bins) % spec.bins;
                out.at(b, f) = spec.at(src, f);
            }
        }
    spec = std::move(out);
}

}  // namespace

std::pair<IqBuffer, AugmentFlags> frequency_domain_masking(const IqBuffer& signal,
                                                           const AugmentConfig& cfg,
                                                           uint64_t seed, MaskStats* stats) {
    Rng rng(seed);
    Spectrogram spec = stft(signal, cfg.masking_stft);
    mask_dimension(spec, MaskDim::Time, cfg, rng, stats);
    mask_dimension(spec, MaskDim::Frequency, cfg, rng, stats);
    AugmentFlags flags;
    flags.fd_mask_time = true;
    flags.fd_mask_freq = true;
    return {istft(spec, cfg.masking_stft), flags};
}

AugmentResult apply_augmentations(const IqBuffer& signal, int64_t label,
                                  const AugmentConfig& cfg, uint64_t seed, MaskStats* stats) {
    const int64_t n = static_cast<int64_t>(signal.size());
    if (n == 0) throw std::invalid_argument("apply_augmentations: empty signal");
    Rng rng(seed);
    AugmentResult r;
    r.iq = signal;
    r.label = label;

    const bool gate_mask_t = rng.uniform() < cfg.base_prob;
    const bool gate_mask_f = rng.uniform() < cfg.base_prob;
    const bool gate_roll = rng.uniform() < cfg.base_prob;
    const bool gate_inv = rng.uniform() < cfg.base_prob;
    const bool gate_spec_t = rng.uniform() < cfg.base_prob;
    const bool gate_spec_f = rng.uniform() < cfg.base_prob;

    if (gate_mask_t || gate_mask_f) {
        Spectrogram spec = stft(r.iq, cfg.masking_stft);
        if (gate_mask_t) {
            mask_dimension(spec, MaskDim::Time, cfg, rng, stats);
            r.flags.fd_mask_time = true;
        }
        if (gate_mask_f) {
            mask_dimension(spec, MaskDim::Frequency, cfg, rng, stats);
            r.flags.fd_mask_freq = true;
        }
        r.iq = istft(spec, cfg.masking_stft);
    }

    if (gate_roll) {
        const int64_t shift = rng.uniform_int(1, n - 1);
        IqBuffer rolled(n);
        for (int64_t i = 0; i < n; ++i) rolled[i] = r.iq[(i + shift) % n];
        r.iq = std::move(rolled);
        // a cyclic roll of a modulated chirp is another valid symbol
        r.label = (r.label + shift) % n;
        r.flags.time_roll = true;
    }

    if (gate_inv) {
        for (cplx& v : r.iq) v = -v;
        r.flags.inversion = true;
    }

    if (gate_spec_t || gate_spec_f) {
        Spectrogram spec = stft(r.iq, cfg.masking_stft);
        if (gate_spec_t) {
            roll_spectrogram(spec, MaskDim::Time, rng.uniform() < 0.5 ? 1 : -1);
            r.flags.spec_roll_time = true;
        }
        if (gate_spec_f) {
            roll_spectrogram(spec, MaskDim::Frequency, rng.uniform() < 0.5 ? 1 : -1);
            r.flags.spec_roll_freq = true;
        }
        r.iq = istft(spec, cfg.masking_stft);
    }

    return r;
}

CondVector build_condition(const AugmentFlags& flags, int sf, const AugmentConfig& cfg,
                           uint64_t seed) {
    if (sf < 5 || sf > 12) throw std::invalid_argument("build_condition: sf out of range");
    Rng rng(seed);
    if (rng.uniform() < cfg.dropout_prob) return CondVector::zeros();
    CondVector c;
    const bool f[7] = {flags.fd_mask_time, flags.fd_mask_freq, flags.time_roll,
                       flags.inversion,    flags.spec_roll_time, flags.spec_roll_freq,
                       flags.reserved};
    for (int i = 0; i < 7; ++i) c.c[i] = f[i] ? 1.0 : -1.0;
    c.c[7] = (static_cast<double>(sf) - 7.0) / 3.0;
    return c;
}

}  // namespace loraflow
