#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "loraflow/iq.hpp"
#include "loraflow/params.hpp"
#include "loraflow/spectral.hpp"
#include "loraflow/tensor.hpp"

namespace loraflow {

/// Reverse-mode tape over a fixed layer set. Nodes are appended in forward
/// order; backward() walks them in reverse. Heavy math is delegated to
/// loraflow::kernels, so the parallelism (and its determinism guarantees)
/// lives there.
///
/// Complex-valued activations are carried as a trailing dimension of size 2
/// (re, im); the FFT/STFT ops are fixed linear maps whose backward is the
/// adjoint transform.
class Tape {
public:
    using Id = int32_t;
    static constexpr Id kNone = -1;

    explicit Tape(bool record = true) : record_(record) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool recording() const { return record_; }

    // ---- leaves ----
    Id input(Tensor v);
    Id param(ParamStore& store, const std::string& name);

    // ---- arithmetic / layers ----
    Id add(Id a, Id b);
    Id scale(Id a, double s);
    /// Per-row scale along dim 0: y[b,...] = x[b,...] * s[b]. s is constant.
    Id scale_rows(Id x, std::vector<double> s);
    /// y = x * (1 + mod), x[B,T,C], mod[B,C] broadcast over T.
    Id mul_gate(Id x, Id mod);
    /// x[..., K] @ w[K, N] + b[N]; pass b = kNone for no bias.
    Id linear(Id x, Id w, Id b);
    /// x[B,T,Cin], w[K,Cin,Cout], b[Cout] or kNone.
    Id conv1d(Id x, Id w, Id b, int64_t stride, int64_t pad);
    /// [B,T,C] -> [B,2T,C], nearest-neighbor repeat.
    Id repeat2_time(Id x);
    Id gelu(Id x);
    /// RMS normalization over the last dim; gain = kNone for a plain
    /// normalize (used where the output must have unit RMS).
    Id rmsnorm(Id x, Id gain, double eps = 1e-8);
    /// [B,T,H*D] -> [B,H,T,D]
    Id split_heads(Id x, int64_t heads);
    /// [B,H,T,D] -> [B,T,H*D]
    Id merge_heads(Id x);
    /// Unit-RMS over the head dim, then scale[h]: x[B,H,T,D], scale[H].
    Id qk_norm(Id x, Id scale, double eps = 1e-8);
    /// Rotary position encoding over the head dim pairs; positions 0..T-1.
    Id rope(Id x, double base);
    /// a[G...,M,D] @ b[G...,N,D]^T -> [G...,M,N]
    Id bmm_nt(Id a, Id b);
    /// a[G...,M,N] @ b[G...,N,D] -> [G...,M,D]
    Id bmm_nn(Id a, Id b);
    /// Softmax over the last dim; optional per-row valid lengths (row index
    /// flattened over leading dims) mask out the tail.
    Id softmax(Id x, std::vector<int64_t> valid = {});
    /// [B,T,C] -> [B,C]
    Id mean_time(Id x);

    // ---- complex ops (x has trailing dim 2) ----
    /// Elementwise complex multiply by a constant buffer (length T) applied
    /// to every batch row of x[B,T,2].
    Id cmul_const(Id x, IqBuffer c);
    /// Per-row complex FFT over T: x[B,T,2] -> [B,T,2]. Unnormalized.
    Id fft_c(Id x);
    /// Centered Hann STFT of each row: x[B,L,2] -> [B,F,W,2].
    Id stft_c(Id x, StftConfig cfg);

    // ---- losses (scalar results) ----
    Id mse_vs(Id x, Tensor target);
    Id huber_vs(Id x, Tensor target, double delta);
    /// Mean over rows of CE(logits, label) + alpha * logsumexp(logits)^2.
    Id ce_zloss(Id logits, std::vector<int64_t> labels, double alpha);

    void backward(Id loss);

    const Tensor& val(Id id) const { return nodes_[id].value; }
    const Tensor& grad(Id id) const;
    double scalar(Id id) const { return nodes_[id].value.data[0]; }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool needs_grad = false;
        std::function<void()> backprop;  // empty for leaves
        ParamStore* store = nullptr;
        std::string pname;
    };

    Id emplace(Tensor value, bool needs_grad, std::function<void()> backprop);
    Tensor& gbuf(Id id);
    bool track(Id id) const { return record_ && nodes_[id].needs_grad; }

    std::vector<Node> nodes_;
    bool record_;
    bool ran_backward_ = false;
};

/// [sin(2 pi f_i t), ..., cos(2 pi f_i t), ...] with n log-spaced frequencies
/// from 1 to 1000.
std::vector<double> fourier_features(double t, int n);

}  // namespace loraflow
