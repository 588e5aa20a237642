#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "loraflow/autograd.hpp"
#include "loraflow/condition.hpp"
#include "loraflow/iq.hpp"
#include "loraflow/params.hpp"

namespace loraflow {

/// Velocity-field network: conv stem, one 2x temporal downsample, a stack of
/// transformer blocks (QK-normalized rotary attention + feedforward, both
/// behind adaptive RMS norms driven by the mapping network), then the mirror
/// upsample stage. An auxiliary classifier head hangs off the transformer
/// output during training only.
struct ModelConfig {
    int width = 64;
    int depth = 4;
    int heads = 4;
    int downsample_factor = 2;  // fixed
    int fourier_dim = 16;
    int cond_dim = 8;  // fixed
    int sf_max = 7;    // classifier covers 2^sf_max classes
    int ff_mult = 2;
    double rope_base = 10000.0;

    int64_t classes() const { return int64_t{1} << sf_max; }
    int head_dim() const { return width / heads; }
    void validate() const;
};

struct ModelOutput {
    IqBuffer velocity;
    std::vector<double> logits;  // empty unless train_mode
};

/// Registers every parameter tensor (classifier included) under fixed names;
/// seeded init, values quantized to f32 so checkpoints round-trip exactly.
void init_params(const ModelConfig& cfg, ParamStore& store, uint64_t seed);

/// Mapping network: Fourier features of t concatenated with the condition
/// vector, two linear layers with a GELU between, final gain-free RMS norm.
/// Returns the conditioning embedding c_g of size width.
std::vector<double> mapping_network(double t, const CondVector& c, const ModelConfig& cfg,
                                    const ParamStore& store);

/// Tape-building forward over a batch x[B,T,2]. Returns node ids.
struct ForwardIds {
    Tape::Id velocity = Tape::kNone;  // [B,T,2]
    Tape::Id logits = Tape::kNone;    // [B,classes], kNone unless train_mode
};
ForwardIds forward_batch(Tape& tape, const ModelConfig& cfg, ParamStore& store,
                         const Tensor& x, const std::vector<double>& t,
                         const std::vector<CondVector>& cond, bool train_mode);

/// Single-signal convenience wrapper (no gradients). Logits are produced
/// only in train_mode; the classifier parameters are never touched otherwise.
ModelOutput forward(const ModelConfig& cfg, ParamStore& store, const IqBuffer& x_t, double t,
                    const CondVector& c, bool train_mode);

/// Batched no-grad velocity evaluation for sampling: x[B,T,2] -> [B,T,2].
Tensor velocity_batch(const ModelConfig& cfg, ParamStore& store, const Tensor& x,
                      const std::vector<double>& t, const std::vector<CondVector>& cond);

Tensor iq_to_tensor(const IqBuffer& x);
IqBuffer tensor_to_iq(const Tensor& x, int64_t row = 0);

}  // namespace loraflow
