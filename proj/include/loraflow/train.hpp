#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "loraflow/augment.hpp"
#include "loraflow/checkpoint.hpp"
#include "loraflow/dataset.hpp"
#include "loraflow/flow.hpp"
#include "loraflow/model.hpp"
#include "loraflow/params.hpp"

namespace loraflow {

struct LossWeights {
    double lambda1 = 0.1;   // FFT loss
    double lambda2 = 0.1;   // multi-scale STFT loss
    double lambda3 = 0.05;  // classifier loss
    double alpha = 1e-4;    // logit z-regularization inside the classifier loss
};

struct LossBreakdown {
    double recon = 0.0;
    double fft = 0.0;
    double stft = 0.0;
    double cls = 0.0;
    double total = 0.0;
};

/// total = recon + l1*fft + l2*stft + l3*cls, evaluated in this exact order.
inline double combine_losses(const LossBreakdown& b, const LossWeights& w) {
    return b.recon + w.lambda1 * b.fft + w.lambda2 * b.stft + w.lambda3 * b.cls;
}

/// Cross entropy plus alpha * logsumexp(logits)^2.
double classification_loss(std::span<const double> logits, int64_t label, double alpha);

/// Eager single-example loss evaluation; the training tape reproduces these
/// numbers exactly. The predicted clean signal x1 = x_t + (1-t) * velocity
/// feeds the two spectral losses against z1.
LossBreakdown total_loss(const FlowState& state, const FlowEndpoints& endpoints,
                         const ModelOutput& out, int64_t label, const LoRaParams& params,
                         const LossWeights& w);

struct TrainConfig {
    ModelConfig model;
    std::vector<int> sf_list{7};
    std::vector<ChirpDirection> directions{ChirpDirection::Up};
    double bw = 125000.0;
    int64_t updates = 1000;
    /// Desk-scale batch: (paper batch 2^(18-sf)) / batch_divisor, min 1.
    int batch_divisor = 32;
    std::map<int, int64_t> batch_override;  // per-sf explicit batch sizes
    double lr = 1e-4;
    int64_t warmup_steps = 500;
    uint64_t seed = 0;
    std::string phase = "synthetic";  // "synthetic" | "finetune"
    double p_real = 0.95;
    LossWeights weights;
    double aug_base_prob = 0.15;
    double cond_dropout_prob = 0.10;
    int64_t checkpoint_every = 0;  // 0: only at the end

    int64_t batch_for_sf(int sf) const;
    void validate() const;
};

/// One optimizer update on an assembled batch. Per-example randomness
/// (t ~ U(0,1), the noise endpoint, augmentations, condition dropout) is
/// keyed by (cfg.seed, step, index), so the result is a pure function of
/// (batch, store, cfg, step). Throws on a non-finite loss.
LossBreakdown train_step(std::span<const SampleRecord> batch, ParamStore& store,
                         const TrainConfig& cfg, int64_t step);

struct PhaseSources {
    std::vector<SampleRecord> synthetic;
    std::vector<SampleRecord> real;
};

struct PhaseResult {
    Checkpoint checkpoint;
    double mixture_real_fraction = 0.0;  // instrumented; finetune only
};

/// Runs one training phase: the synthetic phase samples classes uniformly,
/// the finetune phase draws from the 95/5 real/synthetic mixture. Emits the
/// checkpoint at the end (and every checkpoint_every steps) plus a JSONL
/// training log; resumes exactly from a previous checkpoint when given.
PhaseResult run_phase(const TrainConfig& cfg, const PhaseSources& sources,
                      const std::string& checkpoint_path, const std::string& log_path,
                      const std::string& resume_path = "");

}  // namespace loraflow
