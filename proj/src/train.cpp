#include "loraflow/train.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "loraflow/kernels.hpp"
#include "loraflow/spectral.hpp"

namespace loraflow {

double classification_loss(std::span<const double> logits, int64_t label, double alpha) {
    const int64_t m = static_cast<int64_t>(logits.size());
    if (label < 0 || label >= m)
        throw std::invalid_argument("classification_loss: label out of range");
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    double s = 0.0;
    for (double v : logits) s += std::exp(v - mx);
    const double lse = mx + std::log(s);
    return (lse - logits[label]) + alpha * lse * lse;
}

LossBreakdown total_loss(const FlowState& state, const FlowEndpoints& endpoints,
                         const ModelOutput& out, int64_t label, const LoRaParams& params,
                         const LossWeights& w) {
    const size_t n = endpoints.z1.size();
    if (endpoints.z0.size() != n || state.x.size() != n || out.velocity.size() != n)
        throw std::invalid_argument("total_loss: shape mismatch");

    LossBreakdown b;
    for (size_t i = 0; i < n; ++i) {
        const cplx d = out.velocity[i] - (endpoints.z1[i] - endpoints.z0[i]);
        b.recon += d.real() * d.real() + d.imag() * d.imag();
    }
    b.recon /= static_cast<double>(2 * n);

    IqBuffer x1(n);
    for (size_t i = 0; i < n; ++i) x1[i] = state.x[i] + (1.0 - state.t) * out.velocity[i];
    b.fft = fft_loss(x1, endpoints.z1, params);
    const auto scales = default_stft_scales(params.sf);
    b.stft = multiscale_stft_loss(x1, endpoints.z1, scales);
    b.cls = out.logits.empty() ? 0.0 : classification_loss(out.logits, label, w.alpha);
    b.total = combine_losses(b, w);
    return b;
}

int64_t TrainConfig::batch_for_sf(int sf) const {
    auto it = batch_override.find(sf);
    if (it != batch_override.end()) return it->second;
    const int64_t paper = int64_t{1} << (18 - sf);  // 2048 at SF7, halving per SF
    return std::max<int64_t>(1, paper / std::max(1, batch_divisor));
}

void TrainConfig::validate() const {
    model.validate();
    if (sf_list.empty()) throw std::invalid_argument("train config: sf_list empty");
    for (int sf : sf_list) {
        LoRaParams{sf, bw, ChirpDirection::Up}.validate();
        if (sf > model.sf_max)
            throw std::invalid_argument("train config: sf exceeds model sf_max");
        if (batch_for_sf(sf) < 1) throw std::invalid_argument("train config: batch size < 1");
    }
    if (directions.empty()) throw std::invalid_argument("train config: directions empty");
    if (phase != "synthetic" && phase != "finetune")
        throw std::invalid_argument("train config: unknown phase " + phase);
    if (!(p_real >= 0.0 && p_real <= 1.0))
        throw std::invalid_argument("train config: p_real outside [0,1]");
}

namespace {

struct PreparedSample {
    IqBuffer z1;  // clean (possibly augmented) target
    IqBuffer z0;
    double t = 0.5;
    int64_t label = 0;
    CondVector cond;
};

PreparedSample prepare_sample(const SampleRecord& rec, const TrainConfig& cfg, int64_t step,
                              int64_t index) {
    Rng rng(derive_seed(cfg.seed, static_cast<uint64_t>(step), static_cast<uint64_t>(index)));
    PreparedSample s;
    s.t = rng.uniform();
    const uint64_t aug_seed = rng.next_u64();
    const uint64_t cond_seed = rng.next_u64();

    AugmentConfig aug = AugmentConfig::for_sf(rec.sf);
    aug.base_prob = cfg.aug_base_prob;
    aug.dropout_prob = cfg.cond_dropout_prob;
    AugmentResult ar = apply_augmentations(rec.iq, rec.label, aug, aug_seed);
    s.z1 = std::move(ar.iq);
    s.label = ar.label;
    s.cond = build_condition(ar.flags, rec.sf, aug, cond_seed);

    s.z0.resize(s.z1.size());
    for (cplx& v : s.z0) v = rng.cgaussian();
    return s;
}

struct AssembledBatch {
    LoRaParams params;
    Tensor x_t;        // [B,T,2]
    Tensor vel_target; // [B,T,2]
    std::vector<double> t;
    std::vector<CondVector> cond;
    std::vector<IqBuffer> z1;
    std::vector<int64_t> labels;
};

AssembledBatch assemble(const LoRaParams& params, std::span<const PreparedSample> samples) {
    const int64_t B = static_cast<int64_t>(samples.size());
    const int64_t T = params.symbol_len();
    AssembledBatch ab;
    ab.params = params;
    ab.x_t = Tensor({B, T, 2});
    ab.vel_target = Tensor({B, T, 2});
    for (int64_t b = 0; b < B; ++b) {
        const PreparedSample& s = samples[b];
        if (static_cast<int64_t>(s.z1.size()) != T)
            throw std::invalid_argument("assemble: sample length != 2^sf");
        for (int64_t i = 0; i < T; ++i) {
            const cplx xt = s.t * s.z1[i] + (1.0 - s.t) * s.z0[i];
            const cplx vt = s.z1[i] - s.z0[i];
            ab.x_t.data[(b * T + i) * 2] = xt.real();
            ab.x_t.data[(b * T + i) * 2 + 1] = xt.imag();
            ab.vel_target.data[(b * T + i) * 2] = vt.real();
            ab.vel_target.data[(b * T + i) * 2 + 1] = vt.imag();
        }
        ab.t.push_back(s.t);
        ab.cond.push_back(s.cond);
        ab.z1.push_back(s.z1);
        ab.labels.push_back(s.label);
    }
    return ab;
}

struct LossIds {
    Tape::Id recon, fft, stft, cls, total;
};

// Builds the four-component training loss for one (sf, direction) partition.
LossIds build_training_loss(Tape& tp, const TrainConfig& cfg, ParamStore& store,
                            const AssembledBatch& ab) {
    const int64_t B = ab.x_t.dim(0), T = ab.x_t.dim(1);
    const ForwardIds fwd =
        forward_batch(tp, cfg.model, store, ab.x_t, ab.t, ab.cond, /*train_mode=*/true);

    LossIds ids;
    ids.recon = tp.mse_vs(fwd.velocity, ab.vel_target);

    // predicted clean signal: x1 = x_t + (1-t) v
    std::vector<double> one_minus_t(ab.t.size());
    for (size_t i = 0; i < ab.t.size(); ++i) one_minus_t[i] = 1.0 - ab.t[i];
    Tape::Id x1 = tp.add(tp.input(ab.x_t), tp.scale_rows(fwd.velocity, one_minus_t));

    // FFT loss after dechirping both sides with the conjugate reference
    const IqBuffer ref = base_chirp(ab.params);
    IqBuffer conj_ref(ref.size());
    for (size_t i = 0; i < ref.size(); ++i) conj_ref[i] = std::conj(ref[i]);
    Tensor fft_target({B, T, 2});
    for (int64_t b = 0; b < B; ++b) {
        IqBuffer d(T);
        for (int64_t i = 0; i < T; ++i) d[i] = ab.z1[b][i] * conj_ref[i];
        d = kernels::fft(d);
        for (int64_t i = 0; i < T; ++i) {
            fft_target.data[(b * T + i) * 2] = d[i].real();
            fft_target.data[(b * T + i) * 2 + 1] = d[i].imag();
        }
    }
    ids.fft = tp.huber_vs(tp.fft_c(tp.cmul_const(x1, conj_ref)), std::move(fft_target),
                          kHuberDelta);

    // multi-scale STFT loss
    ids.stft = Tape::kNone;
    for (const StftConfig& sc : default_stft_scales(ab.params.sf)) {
        const int64_t F = 1 + T / sc.hop;
        Tensor target({B, F, sc.window_size, 2});
        for (int64_t b = 0; b < B; ++b) {
            const Spectrogram spec = stft(ab.z1[b], sc);
            for (int64_t f = 0; f < F; ++f)
                for (int64_t w = 0; w < sc.window_size; ++w) {
                    const cplx v = spec.at(w, f);
                    target.data[((b * F + f) * sc.window_size + w) * 2] = v.real();
                    target.data[((b * F + f) * sc.window_size + w) * 2 + 1] = v.imag();
                }
        }
        Tape::Id term = tp.huber_vs(tp.stft_c(x1, sc), std::move(target), kHuberDelta);
        ids.stft = ids.stft == Tape::kNone ? term : tp.add(ids.stft, term);
    }

    ids.cls = tp.ce_zloss(fwd.logits, ab.labels, cfg.weights.alpha);

    Tape::Id total = ids.recon;
    total = tp.add(total, tp.scale(ids.fft, cfg.weights.lambda1));
    total = tp.add(total, tp.scale(ids.stft, cfg.weights.lambda2));
    total = tp.add(total, tp.scale(ids.cls, cfg.weights.lambda3));
    ids.total = total;
    return ids;
}

void adam_update(ParamStore& store, const TrainConfig& cfg, int64_t step) {
    constexpr double b1 = 0.9, b2 = 0.99, eps = 1e-8;
    const int64_t k = step + 1;
    const double warm =
        cfg.warmup_steps <= 0
            ? 1.0
            : std::min(1.0, static_cast<double>(k) / static_cast<double>(cfg.warmup_steps));
    const double lr = cfg.lr * warm;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(k));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(k));
    for (auto& [name, e] : store.entries()) {
        for (int64_t i = 0; i < e.value.numel(); ++i) {
            const double g = e.grad.data[i];
            e.m.data[i] = b1 * e.m.data[i] + (1.0 - b1) * g;
            e.v.data[i] = b2 * e.v.data[i] + (1.0 - b2) * g * g;
            const double mhat = e.m.data[i] / c1;
            const double vhat = e.v.data[i] / c2;
            e.value.data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
        quantize_f32(e.value);
        quantize_f32(e.m);
        quantize_f32(e.v);
    }
}

}  // namespace

LossBreakdown train_step(std::span<const SampleRecord> batch, ParamStore& store,
                         const TrainConfig& cfg, int64_t step) {
    cfg.validate();
    if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
    if (store.empty()) throw std::invalid_argument("train_step: uninitialized parameters");

    // partition by (sf, direction); ordered keys keep accumulation order fixed
    std::map<std::pair<int, int>, std::vector<size_t>> parts;
    for (size_t i = 0; i < batch.size(); ++i)
        parts[{batch[i].sf, batch[i].direction == ChirpDirection::Up ? 0 : 1}].push_back(i);

    store.zero_grads();
    const double n_total = static_cast<double>(batch.size());
    LossBreakdown acc;
    for (const auto& [key, indices] : parts) {
        std::vector<PreparedSample> samples;
        samples.reserve(indices.size());
        for (size_t idx : indices)
            samples.push_back(
                prepare_sample(batch[idx], cfg, step, static_cast<int64_t>(idx)));
        const LoRaParams params{key.first, cfg.bw,
                                key.second == 0 ? ChirpDirection::Up : ChirpDirection::Down};
        const AssembledBatch ab = assemble(params, samples);

        Tape tp(true);
        const LossIds ids = build_training_loss(tp, cfg, store, ab);
        const double frac = static_cast<double>(indices.size()) / n_total;
        acc.recon += frac * tp.scalar(ids.recon);
        acc.fft += frac * tp.scalar(ids.fft);
        acc.stft += frac * tp.scalar(ids.stft);
        acc.cls += frac * tp.scalar(ids.cls);
        tp.backward(tp.scale(ids.total, frac));
    }
    acc.total = combine_losses(acc, cfg.weights);

    if (!std::isfinite(acc.total))
        throw std::runtime_error(
            "train_step: non-finite loss at step " + std::to_string(step) +
            " (recon=" + std::to_string(acc.recon) + ", fft=" + std::to_string(acc.fft) +
            ", stft=" + std::to_string(acc.stft) + ", cls=" + std::to_string(acc.cls) + ")");

    adam_update(store, cfg, step);
    return acc;
}

PhaseResult run_phase(const TrainConfig& cfg, const PhaseSources& sources,
                      const std::string& checkpoint_path, const std::string& log_path,
                      const std::string& resume_path) {
    cfg.validate();
    const bool finetune = cfg.phase == "finetune";
    if (sources.synthetic.empty())
        throw std::invalid_argument("run_phase: synthetic data source is required");
    if (finetune && sources.real.empty())
        throw std::invalid_argument("run_phase: finetune phase requires a real data source");

    // per-(sf, direction) synthetic pools for uniform class sampling
    std::map<std::pair<int, int>, std::vector<size_t>> pools;
    std::vector<std::pair<int, ChirpDirection>> groups;
    for (int sf : cfg.sf_list)
        for (ChirpDirection d : cfg.directions) groups.emplace_back(sf, d);
    for (size_t i = 0; i < sources.synthetic.size(); ++i) {
        const SampleRecord& r = sources.synthetic[i];
        pools[{r.sf, r.direction == ChirpDirection::Up ? 0 : 1}].push_back(i);
    }
    for (const auto& [sf, d] : groups) {
        if (!pools.count({sf, d == ChirpDirection::Up ? 0 : 1}))
            throw std::invalid_argument("run_phase: no synthetic data for sf " +
                                        std::to_string(sf) + " " + to_string(d));
    }

    ParamStore store;
    TrainMeta meta;
    meta.phase = cfg.phase;
    meta.seed = cfg.seed;
    if (!resume_path.empty()) {
        Checkpoint ck = load_checkpoint(resume_path);
        store = std::move(ck.store);
        meta.step = ck.meta.step;
    } else {
        init_params(cfg.model, store, cfg.seed);
    }

    std::ofstream log;
    if (!log_path.empty()) {
        log.open(log_path, meta.step == 0 ? std::ios::trunc : std::ios::app);
        if (!log) throw std::runtime_error("run_phase: cannot open log " + log_path);
    }

    int64_t real_draws = 0, mixture_draws = 0;
    for (int64_t step = meta.step; step < cfg.updates; ++step) {
        const auto [sf, dir] = groups[step % groups.size()];
        const int64_t bsz = cfg.batch_for_sf(sf);
        std::vector<SampleRecord> batch;
        batch.reserve(bsz);
        if (finetune) {
            MixtureSampler sampler(sources.real, sources.synthetic, cfg.p_real,
                                   derive_seed(cfg.seed, 0xF17E, static_cast<uint64_t>(step)));
            for (int64_t i = 0; i < bsz; ++i) batch.push_back(sampler.next());
            real_draws += sampler.real_draws();
            mixture_draws += sampler.draws();
        } else {
            const auto& pool = pools.at({sf, dir == ChirpDirection::Up ? 0 : 1});
            Rng rng(derive_seed(cfg.seed, 0xBA7C4, static_cast<uint64_t>(step)));
            for (int64_t i = 0; i < bsz; ++i)
                batch.push_back(
                    sources.synthetic[pool[rng.uniform_int(0, pool.size() - 1)]]);
        }

        const LossBreakdown b = train_step(batch, store, cfg, step);
        meta.step = step + 1;

        if (log.is_open()) {
            const double warm = cfg.warmup_steps <= 0
                                    ? 1.0
                                    : std::min(1.0, static_cast<double>(step + 1) /
                                                        static_cast<double>(cfg.warmup_steps));
            nlohmann::json line{{"step", step},   {"recon", b.recon}, {"fft", b.fft},
                                {"stft", b.stft}, {"cls", b.cls},     {"total", b.total},
                                {"lr", cfg.lr * warm}};
            log << line.dump() << "\n";
        }
        if (cfg.checkpoint_every > 0 && meta.step % cfg.checkpoint_every == 0 &&
            !checkpoint_path.empty())
            save_checkpoint(checkpoint_path, cfg.model, store, meta);
    }

    if (!checkpoint_path.empty()) save_checkpoint(checkpoint_path, cfg.model, store, meta);
    PhaseResult res;
    res.checkpoint.config = cfg.model;
    res.checkpoint.store = std::move(store);
    res.checkpoint.meta = meta;
    res.mixture_real_fraction =
        mixture_draws == 0 ? 0.0
                           : static_cast<double>(real_draws) / static_cast<double>(mixture_draws);
    return res;
}

}  // namespace loraflow
