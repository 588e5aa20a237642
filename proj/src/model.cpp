#include "loraflow/model.hpp"

#include <cmath>
#include <stdexcept>

#include "loraflow/rng.hpp"

namespace loraflow {

void ModelConfig::validate() const {
    if (width <= 0 || width % heads != 0)
        throw std::invalid_argument("model width must be a positive multiple of heads");
    if (head_dim() % 2 != 0)
        throw std::invalid_argument("head dim must be even for rotary encoding");
    if (depth < 1) throw std::invalid_argument("model depth must be >= 1");
    if (downsample_factor != 2)
        throw std::invalid_argument("downsample factor is fixed at 2");
    if (cond_dim != 8) throw std::invalid_argument("condition dim is fixed at 8");
    if (fourier_dim < 1) throw std::invalid_argument("fourier_dim must be >= 1");
    if (sf_max < 5 || sf_max > 12)
        throw std::invalid_argument("sf_max must be in [5, 12]");
}

namespace {

Tensor randn(std::vector<int64_t> shape, double std, Rng& rng) {
    Tensor t(std::move(shape));
    for (double& v : t.data) v = std * rng.gaussian();
    quantize_f32(t);
    return t;
}

Tensor ones(std::vector<int64_t> shape) {
    Tensor t(std::move(shape));
    std::fill(t.data.begin(), t.data.end(), 1.0);
    return t;
}

void add_linear(ParamStore& s, Rng& rng, const std::string& prefix, int64_t in, int64_t out) {
    s.add(prefix + ".w", randn({in, out}, 1.0 / std::sqrt(static_cast<double>(in)), rng));
    s.add(prefix + ".b", Tensor({out}));
}

void add_conv(ParamStore& s, Rng& rng, const std::string& prefix, int64_t k, int64_t cin,
              int64_t cout) {
    s.add(prefix + ".w",
          randn({k, cin, cout}, 1.0 / std::sqrt(static_cast<double>(k * cin)), rng));
    s.add(prefix + ".b", Tensor({cout}));
}

// AdaRMSNorm: learnable gain plus a zero-initialized modulation projection
// from c_g, so zero modulation reproduces the plain RMS norm output.
void add_ada_norm(ParamStore& s, const std::string& prefix, int64_t c, int64_t cg_dim) {
    s.add(prefix + ".gain", ones({c}));
    s.add(prefix + ".mod.w", Tensor({cg_dim, c}));
}

void add_conv_ff(ParamStore& s, Rng& rng, const std::string& prefix, int64_t c, int64_t hidden,
                 int64_t cg_dim) {
    add_ada_norm(s, prefix + ".norm", c, cg_dim);
    add_conv(s, rng, prefix + ".conv1", 3, c, hidden);
    add_conv(s, rng, prefix + ".conv2", 3, hidden, c);
}

}  // namespace

void init_params(const ModelConfig& cfg, ParamStore& store, uint64_t seed) {
    cfg.validate();
    Rng rng(derive_seed(seed, 0xC0DE));
    const int64_t w = cfg.width;
    const int64_t ff = w * cfg.ff_mult;
    const int64_t map_in = 2 * cfg.fourier_dim + cfg.cond_dim;

    add_linear(store, rng, "map.fc1", map_in, w);
    add_linear(store, rng, "map.fc2", w, w);

    add_conv(store, rng, "stem", 3, 2, w);
    add_conv(store, rng, "down", 2, w, w);
    add_conv_ff(store, rng, "cff_in", w, ff, w);

    for (int i = 0; i < cfg.depth; ++i) {
        const std::string p = "blk" + std::to_string(i);
        add_ada_norm(store, p + ".attn.norm", w, w);
        add_linear(store, rng, p + ".attn.q", w, w);
        add_linear(store, rng, p + ".attn.k", w, w);
        add_linear(store, rng, p + ".attn.v", w, w);
        store.add(p + ".attn.qs", ones({cfg.heads}));
        store.add(p + ".attn.ks", ones({cfg.heads}));
        add_linear(store, rng, p + ".attn.proj", w, w);
        add_ada_norm(store, p + ".ff.norm", w, w);
        add_linear(store, rng, p + ".ff.fc1", w, ff);
        add_linear(store, rng, p + ".ff.fc2", ff, w);
    }

    add_conv_ff(store, rng, "cff_out", w, ff, w);
    add_conv(store, rng, "up.conv", 3, w, w);
    store.add("out.norm.gain", ones({w}));
    add_linear(store, rng, "out.fc", w, 2);

    add_linear(store, rng, "cls.fc1", w, 2 * w);
    add_linear(store, rng, "cls.fc2", 2 * w, cfg.classes());
}

namespace {

Tensor mapping_input(const ModelConfig& cfg, const std::vector<double>& t,
                     const std::vector<CondVector>& cond) {
    const int64_t B = static_cast<int64_t>(t.size());
    const int64_t F2 = 2 * cfg.fourier_dim;
    Tensor in({B, F2 + cfg.cond_dim});
    for (int64_t b = 0; b < B; ++b) {
        const std::vector<double> ff = fourier_features(t[b], cfg.fourier_dim);
        for (int64_t i = 0; i < F2; ++i) in.data[b * (F2 + 8) + i] = ff[i];
        for (int64_t i = 0; i < 8; ++i) in.data[b * (F2 + 8) + F2 + i] = cond[b].c[i];
    }
    return in;
}

Tape::Id tape_mapping(Tape& tp, const ModelConfig& cfg, ParamStore& store,
                      const std::vector<double>& t, const std::vector<CondVector>& cond) {
    Tape::Id x = tp.input(mapping_input(cfg, t, cond));
    x = tp.linear(x, tp.param(store, "map.fc1.w"), tp.param(store, "map.fc1.b"));
    x = tp.gelu(x);
    x = tp.linear(x, tp.param(store, "map.fc2.w"), tp.param(store, "map.fc2.b"));
    return tp.rmsnorm(x, Tape::kNone);  // unit-RMS conditioning embedding
}

Tape::Id tape_ada_norm(Tape& tp, ParamStore& store, const std::string& prefix, Tape::Id x,
                       Tape::Id cg) {
    Tape::Id xn = tp.rmsnorm(x, tp.param(store, prefix + ".gain"));
    Tape::Id mod = tp.linear(cg, tp.param(store, prefix + ".mod.w"), Tape::kNone);
    return tp.mul_gate(xn, mod);
}

Tape::Id tape_conv_ff(Tape& tp, ParamStore& store, const std::string& prefix, Tape::Id x,
                      Tape::Id cg) {
    Tape::Id h = tape_ada_norm(tp, store, prefix + ".norm", x, cg);
    h = tp.conv1d(h, tp.param(store, prefix + ".conv1.w"), tp.param(store, prefix + ".conv1.b"),
                  1, 1);
    h = tp.gelu(h);
    h = tp.conv1d(h, tp.param(store, prefix + ".conv2.w"), tp.param(store, prefix + ".conv2.b"),
                  1, 1);
    return tp.add(x, h);
}

Tape::Id tape_attention(Tape& tp, const ModelConfig& cfg, ParamStore& store,
                        const std::string& p, Tape::Id x, Tape::Id cg) {
    Tape::Id h = tape_ada_norm(tp, store, p + ".norm", x, cg);
    Tape::Id q = tp.linear(h, tp.param(store, p + ".q.w"), tp.param(store, p + ".q.b"));
    Tape::Id k = tp.linear(h, tp.param(store, p + ".k.w"), tp.param(store, p + ".k.b"));
    Tape::Id v = tp.linear(h, tp.param(store, p + ".v.w"), tp.param(store, p + ".v.b"));
    q = tp.split_heads(q, cfg.heads);
    k = tp.split_heads(k, cfg.heads);
    v = tp.split_heads(v, cfg.heads);
    q = tp.qk_norm(q, tp.param(store, p + ".qs"));
    k = tp.qk_norm(k, tp.param(store, p + ".ks"));
    q = tp.rope(q, cfg.rope_base);
    k = tp.rope(k, cfg.rope_base);
    Tape::Id scores =
        tp.scale(tp.bmm_nt(q, k), 1.0 / std::sqrt(static_cast<double>(cfg.head_dim())));
    Tape::Id probs = tp.softmax(scores);
    Tape::Id out = tp.merge_heads(tp.bmm_nn(probs, v));
    out = tp.linear(out, tp.param(store, p + ".proj.w"), tp.param(store, p + ".proj.b"));
    return tp.add(x, out);
}

Tape::Id tape_ff(Tape& tp, ParamStore& store, const std::string& p, Tape::Id x, Tape::Id cg) {
    Tape::Id h = tape_ada_norm(tp, store, p + ".norm", x, cg);
    h = tp.linear(h, tp.param(store, p + ".fc1.w"), tp.param(store, p + ".fc1.b"));
    h = tp.gelu(h);
    h = tp.linear(h, tp.param(store, p + ".fc2.w"), tp.param(store, p + ".fc2.b"));
    return tp.add(x, h);
}

}  // namespace

ForwardIds forward_batch(Tape& tp, const ModelConfig& cfg, ParamStore& store, const Tensor& x,
                         const std::vector<double>& t, const std::vector<CondVector>& cond,
                         bool train_mode) {
    cfg.validate();
    if (x.rank() != 3 || x.dim(2) != 2)
        throw std::invalid_argument("forward: expected input [B,T,2], got " + x.shape_str());
    const int64_t B = x.dim(0), T = x.dim(1);
    if (T < 4 || (T & (T - 1)) != 0)
        throw std::invalid_argument("forward: T must be a power of two >= 4");
    if (static_cast<int64_t>(t.size()) != B || static_cast<int64_t>(cond.size()) != B)
        throw std::invalid_argument("forward: t/cond batch mismatch");
    for (double v : x.data)
        if (!std::isfinite(v)) throw std::domain_error("forward: non-finite input");

    Tape::Id cg = tape_mapping(tp, cfg, store, t, cond);

    Tape::Id h = tp.input(x);
    h = tp.conv1d(h, tp.param(store, "stem.w"), tp.param(store, "stem.b"), 1, 1);
    h = tp.conv1d(h, tp.param(store, "down.w"), tp.param(store, "down.b"), 2, 0);
    h = tape_conv_ff(tp, store, "cff_in", h, cg);

    for (int i = 0; i < cfg.depth; ++i) {
        const std::string p = "blk" + std::to_string(i);
        h = tape_attention(tp, cfg, store, p + ".attn", h, cg);
        h = tape_ff(tp, store, p + ".ff", h, cg);
    }

    ForwardIds ids;
    if (train_mode) {
        Tape::Id pooled = tp.mean_time(h);
        Tape::Id c1 =
            tp.linear(pooled, tp.param(store, "cls.fc1.w"), tp.param(store, "cls.fc1.b"));
        ids.logits =
            tp.linear(tp.gelu(c1), tp.param(store, "cls.fc2.w"), tp.param(store, "cls.fc2.b"));
    }

    h = tape_conv_ff(tp, store, "cff_out", h, cg);
    h = tp.repeat2_time(h);
    h = tp.conv1d(h, tp.param(store, "up.conv.w"), tp.param(store, "up.conv.b"), 1, 1);
    h = tp.rmsnorm(h, tp.param(store, "out.norm.gain"));
    ids.velocity = tp.linear(h, tp.param(store, "out.fc.w"), tp.param(store, "out.fc.b"));

    for (double v : tp.val(ids.velocity).data)
        if (!std::isfinite(v)) throw std::domain_error("forward: non-finite activation");
    return ids;
}

std::vector<double> mapping_network(double t, const CondVector& c, const ModelConfig& cfg,
                                    const ParamStore& store) {
    Tape tp(false);
    Tape::Id cg = tape_mapping(tp, cfg, const_cast<ParamStore&>(store), {t}, {c});
    const Tensor& v = tp.val(cg);
    return {v.data.begin(), v.data.end()};
}

ModelOutput forward(const ModelConfig& cfg, ParamStore& store, const IqBuffer& x_t, double t,
                    const CondVector& c, bool train_mode) {
    Tape tp(false);
    const ForwardIds ids = forward_batch(tp, cfg, store, iq_to_tensor(x_t), {t}, {c}, train_mode);
    ModelOutput out;
    out.velocity = tensor_to_iq(tp.val(ids.velocity));
    if (train_mode) {
        const Tensor& lv = tp.val(ids.logits);
        out.logits.assign(lv.data.begin(), lv.data.end());
    }
    return out;
}

Tensor velocity_batch(const ModelConfig& cfg, ParamStore& store, const Tensor& x,
                      const std::vector<double>& t, const std::vector<CondVector>& cond) {
    Tape tp(false);
    const ForwardIds ids = forward_batch(tp, cfg, store, x, t, cond, false);
    return tp.val(ids.velocity);
}

Tensor iq_to_tensor(const IqBuffer& x) {
    Tensor t({1, static_cast<int64_t>(x.size()), 2});
    for (size_t i = 0; i < x.size(); ++i) {
        t.data[2 * i] = x[i].real();
        t.data[2 * i + 1] = x[i].imag();
    }
    return t;
}

IqBuffer tensor_to_iq(const Tensor& x, int64_t row) {
    const int64_t T = x.dim(1);
    IqBuffer out(T);
    const double* p = x.data.data() + row * T * 2;
    for (int64_t i = 0; i < T; ++i) out[i] = cplx(p[2 * i], p[2 * i + 1]);
    return out;
}

}  // namespace loraflow
