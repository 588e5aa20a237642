#include "loraflow/autograd.hpp"

#include <cmath>
#include <cstring>

#include "loraflow/kernels.hpp"

namespace loraflow {

namespace {

void check(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

void accumulate(Tensor& dst, const Tensor& src) {
    kernels::axpy(dst.data.data(), 1.0, src.data.data(), src.numel());
}

}  // namespace

Tape::Id Tape::emplace(Tensor value, bool needs_grad, std::function<void()> backprop) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = record_ && needs_grad;
    if (n.needs_grad) n.backprop = std::move(backprop);
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size() - 1);
}

Tensor& Tape::gbuf(Id id) {
    Node& n = nodes_[id];
    if (n.grad.data.empty()) n.grad = Tensor(n.value.shape);
    return n.grad;
}

const Tensor& Tape::grad(Id id) const {
    const Node& n = nodes_[id];
    if (n.grad.data.empty())
        throw std::logic_error("gradient not recorded for this node");
    return n.grad;
}

Tape::Id Tape::input(Tensor v) { return emplace(std::move(v), false, {}); }

Tape::Id Tape::param(ParamStore& store, const std::string& name) {
    Tensor v = store.value(name);  // copy; the tape owns its values
    if (!record_) return input(std::move(v));
    Id id = static_cast<Id>(nodes_.size());
    Node n;
    n.value = std::move(v);
    n.needs_grad = true;
    n.store = &store;
    n.pname = name;
    n.backprop = [this, id]() {
        Node& self = nodes_[id];
        accumulate(self.store->grad(self.pname), self.grad);
    };
    nodes_.push_back(std::move(n));
    return id;
}

Tape::Id Tape::add(Id a, Id b) {
    check(nodes_[a].value.same_shape(nodes_[b].value), "add: shape mismatch");
    Tensor out = nodes_[a].value;
    accumulate(out, nodes_[b].value);
    Id id = emplace(std::move(out), track(a) || track(b), {});
    if (nodes_[id].needs_grad) {
        nodes_[id].backprop = [this, id, a, b]() {
            const Tensor& g = nodes_[id].grad;
            if (track(a)) accumulate(gbuf(a), g);
            if (track(b)) accumulate(gbuf(b), g);
        };
    }
    return id;
}

Tape::Id Tape::scale(Id a, double s) {
    Tensor out = nodes_[a].value;
    for (double& v : out.data) v *= s;
    Id id = emplace(std::move(out), track(a), {});
    if (nodes_[id].needs_grad) {
        nodes_[id].backprop = [this, id, a, s]() {
            kernels::axpy(gbuf(a).data.data(), s, nodes_[id].grad.data.data(),
                          nodes_[id].grad.numel());
        };
    }
    return id;
}

Tape::Id Tape::scale_rows(Id x, std::vector<double> s) {
    const Tensor& xv = nodes_[x].value;
    check(xv.rank() >= 1 && xv.dim(0) == static_cast<int64_t>(s.size()),
          "scale_rows: dim 0 mismatch");
    const int64_t B = xv.dim(0), R = xv.numel() / xv.dim(0);
    Tensor out = xv;
    for (int64_t b = 0; b < B; ++b)
        for (int64_t i = 0; i < R; ++i) out.data[b * R + i] *= s[b];
    Id id = emplace(std::move(out), track(x), {});
    if (nodes_[id].needs_grad) {
        nodes_[id].backprop = [this, id, x, s = std::move(s), B, R]() {
            const Tensor& g = nodes_[id].grad;
            Tensor& dx = gbuf(x);
            for (int64_t b = 0; b < B; ++b)
                for (int64_t i = 0; i < R; ++i) dx.data[b * R + i] += s[b] * g.data[b * R + i];
        };
    }
    return id;
}

Tape::Id Tape::mul_gate(Id x, Id mod) {
    const Tensor& xv = nodes_[x].value;
    const Tensor& mv = nodes_[mod].value;
    check(xv.rank() == 3 && mv.rank() == 2 && xv.dim(0) == mv.dim(0) && xv.dim(2) == mv.dim(1),
          "mul_gate: expected x[B,T,C], mod[B,C]");
    const int64_t B = xv.dim(0), T = xv.dim(1), C = xv.dim(2);
    Tensor out(xv.shape);
    for (int64_t b = 0; b < B; ++b)
        for (int64_t t = 0; t < T; ++t)
            for (int64_t c = 0; c < C; ++c) {
                const int64_t i = (b * T + t) * C + c;
                out.data[i] = xv.data[i] * (1.0 + mv.data[b * C + c]);
            }
    Id id = emplace(std::move(out), track(x) || track(mod), {});
    if (nodes_[id].needs_grad) {
        nodes_[id].backprop = [this, id, x, mod, B, T, C]() {
            const Tensor& g = nodes_[id].grad;
            const Tensor& xv2 = nodes_[x].value;
            const Tensor& mv2 = nodes_[mod].value;
            if (track(x)) {
                Tensor& dx = gbuf(x);
                for (int64_t b = 0; b < B; ++b)
                    for (int64_t t = 0; t < T; ++t)
                        for (int64_t c = 0; c < C; ++c) {
                            const int64_t i = (b * T + t) * C + c;
                            dx.data[i] += g.data[i] * (1.0 + mv2.data[b * C + c]);
                        }
            }
            if (track(mod)) {
                Tensor& dm = gbuf(mod);
                for (int64_t b = 0; b < B; ++b)
                    for (int64_t c = 0; c < C; ++c) {
                        double acc = 0.0;
                        for (int64_t t = 0; t < T; ++t) {
                            const int64_t i = (b * T + t) * C + c;
                            acc += g.data[i] * xv2.data[i];
                        }
                        dm.data[b * C + c] += acc;
                    }
            }
        };
    }
    return id;
}

Tape::Id Tape::linear(Id x, Id w, Id b) {
    const Tensor& xv = nodes_[x].value;
    const Tensor& wv = nodes_[w].value;
    check(wv.rank() == 2, "linear: weight must be 2-d");
    const int64_t K = wv.dim(0), N = wv.dim(1);
    check(xv.rank() >= 1 && xv.shape.back() == K, "linear: inner dim mismatch");
    const int64_t M = xv.numel() / K;
    const double* bias = nullptr;
    if (b != kNone) {
        check(nodes_[b].value.numel() == N, "linear: bias size mismatch");
        bias = nodes_[b].value.data.data();
    }
    std::vector<int64_t> oshape = xv.shape;
    oshape.back() = N;
    Tensor out(oshape);
    kernels::matmul(xv.data.data(), wv.data.data(), bias, out.data.data(), M, K, N);
    const bool needs = track(x) || track(w) || (b != kNone && track(b));
    Id id = emplace(std::move(out), needs, {});
    if (nodes_[id].needs_grad) {
        nodes_[id].backprop = [this, id, x, w, b, M, K, N]() {
            const Tensor& g = nodes_[id].grad;
            if (track(x)) {
                Tensor dx(nodes_[x].value.shape);
                kernels::matmul_a_bt(g.data.data(), nodes_[w].value.data.data(),
                                     dx.data.data(), M, N, K);
                accumulate(gbuf(x), dx);
            }
            if (track(w)) {
                Tensor dw(nodes_[w].value.shape);
                kernels::matmul_at_b(nodes_[x].value.data.data(), g.data.data(),
                                     dw.data.data(), M, K, N);
                accumulate(gbuf(w), dw);
            }
            if (b != kNone && track(b)) {
                Tensor& db = gbuf(b);
                for (int64_t m = 0; m < M; ++m)
                    for (int64_t n = 0; n < N; ++n) db.data[n] += g.data[m * N + n];
            }
        };
    }
    return id;
}

Tape::Id Tape::conv1d(Id x, Id w, Id b, int64_t stride, int64_t pad) {
    const Tensor& xv = nodes_[x].value;
    const Tensor& wv = nodes_[w].value;
    check(xv.rank() == 3 && wv.rank() == 3, "conv1d: expected x[B,T,Cin], w[K,Cin,Cout]");
    const int64_t B = xv.dim(0), T = xv.dim(1), Cin = xv.dim(2);
    const int64_t K = wv.dim(0), Cout = wv.dim(2);
    check(wv.dim(1) == Cin, "conv1d: channel mismatch");
    const int64_t To = (T + 2 * pad - K) / stride + 1;
    check(To >= 1, "conv1d: output length would be empty");
    const double* bias = nullptr;
    if (b != kNone) {
        check(nodes_[b].value.numel() == Cout, "conv1d: bias size mismatch");
        bias = nodes_[b].value.data.data();
    }
    Tensor out({B, To, Cout});
    kernels::conv1d(xv.data.data(), wv.data.data(), bias, out.data.data(), B, T, Cin, Cout, K,
                    stride, pad);
    const bool needs = track(x) || track(w) || (b != kNone && track(b));
    Id id = emplace(std::move(out), needs, {});
    if (nodes_[id].needs_grad) {
        nodes_[id].backprop = [this, id, x, w, b, B, T, Cin, Cout, K, stride, pad, To]() {
            const Tensor& g = nodes_[id].grad;
            if (track(x)) {
                Tensor dx(nodes_[x].value.shape);
                kernels::conv1d_dx(g.data.data(), nodes_[w].value.data.data(), dx.data.data(),
                                   B, T, Cin, Cout, K, stride, pad);
                accumulate(gbuf(x), dx);
            }
            if (track(w)) {
                Tensor dw(nodes_[w].value.shape);
                kernels::conv1d_dw(nodes_[x].value.data.data(), g.data.data(), dw.data.data(),
                                   B, T, Cin, Cout, K, stride, pad);
                accumulate(gbuf(w), dw);
            }
            if (b != kNone && track(b)) {
                Tensor db(nodes_[b].value.shape);
                kernels::conv1d_db(g.data.data(), db.data.data(), B, To, Cout);
                accumulate(gbuf(b), db);
            }
        };
    }
    return id;
}

Tape::Id Tape::repeat2_time(Id x) {
    const Tensor& xv = nodes_[x].value;
    check(xv.rank() == 3, "repeat2_time: expected [B,T,C]");
    const int64_t B = xv.dim(0), T = xv.dim(1), C = xv.dim(2);
    Tensor out({B, 2 * T, C});
    for (int64_t b = 0; b < B; ++b)
        for (int64_t t = 0; t < T; ++t) {
            const double* src = xv.data.data() + (b * T + t) * C;
            double* d0 = out.data.data() + (b * 2 * T + 2 * t) * C;
            std::memcpy(d0, src, C * sizeof(double));
            std::memcpy(d0 + C, src, C * sizeof(double));
        }
    Id id = emplace(std::move(out), track(x), {});
    if (nodes_[id].needs_grad) {
        nodes_[id].backprop = [this, id, x, B, T, C]() {
            const Tensor& g = nodes_[id].grad;
            Tensor& dx = gbuf(x);
            for (int64_t b = 0; b < B; ++b)
                for (int64_t t = 0; t < T; ++t)
                    for (int64_t c = 0; c < C; ++c)
                        dx.data[(b * T + t) * C + c] +=
                            g.data[(b * 2 * T + 2 * t) * C + c] +
                            g.data[(b * 2 * T + 2 * t + 1) * C + c];
        };
    }
    return id;
}

Tape::Id Tape::gelu(Id x) {
    const Tensor& xv = nodes_[x].value;
    Tensor out(xv.shape);
    kernels::gelu(xv.data.data(), out.data.data(), xv.numel());
    Id id = emplace(std::move(out), track(x), {});
    if (nodes_[id].needs_grad) {
        nodes_[id].backprop = [this, id, x]() {
            const Tensor& g = nodes_[id].grad;
            Tensor dx(nodes_[x].value.shape);
            kernels::gelu_dx(nodes_[x].value.data.data(), g.data.data(), dx.data.data(),
                             dx.numel());
            accumulate(gbuf(x), dx);
        };
    }
    return id;
}

Tape::Id Tape::rmsnorm(Id x, Id gain, double eps) {
    const Tensor& xv = nodes_[x].value;
    check(xv.rank() >= 1, "rmsnorm: rank must be >= 1");
    const int64_t C = xv.shape.back();
    const int64_t R = xv.numel() / C;
    if (gain != kNone) check(nodes_[gain].value.numel() == C, "rmsnorm: gain size mismatch");
    Tensor out(xv.shape);
    std::vector<double> rms(R);
    for (int64_t r = 0; r < R; ++r) {
        const double* xr = xv.data.data() + r * C;
        double acc = 0.0;
        for (int64_t c = 0; c < C; ++c) acc += xr[c] * xr[c];
        rms[r] = std::sqrt(acc / static_cast<double>(C) + eps);
        const double inv = 1.0 / rms[r];
        double* yr = out.data.data() + r * C;
        if (gain != kNone) {
            const double* gv = nodes_[gain].value.data.data();
            for (int64_t c = 0; c < C; ++c) yr[c] = xr[c] * inv * gv[c];
        } else {
            for (int64_t c = 0; c < C; ++c) yr[c] = xr[c] * inv;
        }
    }
    const bool needs = track(x) || (gain != kNone && track(gain));
    Id id = emplace(std::move(out), needs, {});
    if (nodes_[id].needs_grad) {
        nodes_[id].backprop = [this, id, x, gain, C, R, rms = std::move(rms)]() {
            const Tensor& g = nodes_[id].grad;
            const Tensor& xv2 = nodes_[x].value;
            const double* gv =
                gain != kNone ? nodes_[gain].value.data.data() : nullptr;
            if (track(x)) {
                Tensor& dx = gbuf(x);
                for (int64_t r = 0; r < R; ++r) {
                    const double* xr = xv2.data.data() + r * C;
                    const double* gr = g.data.data() + r * C;
                    double* dxr = dx.data.data() + r * C;
                    double dot = 0.0;
                    for (int64_t c = 0; c < C; ++c)
                        dot += gr[c] * (gv ? gv[c] : 1.0) * xr[c];
                    const double inv = 1.0 / rms[r];
                    const double k = dot * inv * inv * inv / static_cast<double>(C);
                    for (int64_t c = 0; c < C; ++c)
                        dxr[c] += gr[c] * (gv ? gv[c] : 1.0) * inv - xr[c] * k;
                }
            }
            if (gain != kNone && track(gain)) {
                Tensor& dg = gbuf(gain);
                for (int64_t r = 0; r < R; ++r) {
                    const double* xr = xv2.data.data() + r * C;
                    const double* gr = g.data.data() + r * C;
                    const double inv = 1.0 / rms[r];
                    for (int64_t c = 0; c < C; ++c) dg.data[c] += gr[c] * xr[c] * inv;
                }
            }
        };
    }
    return id;
}

Tape::Id Tape::split_heads(Id x, int64_t heads) {
    const Tensor& xv = nodes_[x].value;
    check(xv.rank() == 3 && xv.dim(2) % heads == 0, "split_heads: bad shape");
    const int64_t B = xv.dim(0), T = xv.dim(1), D = xv.dim(2) / heads;
    Tensor out({B, heads, T, D});
    for (int64_t b = 0; b < B; ++b)
        for (int64_t t = 0; t < T; ++t)
            for (int64_t h = 0; h < heads; ++h)
                std::memcpy(out.data.data() + (((b * heads + h) * T + t) * D),
                            xv.data.data() + ((b * T + t) * heads + h) * D,
                            D * sizeof(double));
    Id id = emplace(std::move(out), track(x), {});
    if (nodes_[id].needs_grad) {
        nodes_[id].backprop = [this, id, x, B, T, heads, D]() {
            const Tensor& g = nodes_[id].grad;
            Tensor& dx = gbuf(x);
            for (int64_t b = 0; b < B; ++b)
                for (int64_t t = 0; t < T; ++t)
                    for (int64_t h = 0; h < heads; ++h)
                        for (int64_t d = 0; d < D; ++d)
                            dx.data[((b * T + t) * heads + h) * D + d] +=
                                g.data[((b * heads + h) * T + t) * D + d];
        };
    }
    return id;
}

Tape::Id Tape::merge_heads(Id x) {
    const Tensor& xv = nodes_[x].value;
    check(xv.rank() == 4, "merge_heads: expected [B,H,T,D]");
    const int64_t B = xv.dim(0), H = xv.dim(1), T = xv.dim(2), D = xv.dim(3);
    Tensor out({B, T, H * D});
    for (int64_t b = 0; b < B; ++b)
        for (int64_t h = 0; h < H; ++h)
            for (int64_t t = 0; t < T; ++t)
                std::memcpy(out.data.data() + ((b * T + t) * H + h) * D,
                            xv.data.data() + ((b * H + h) * T + t) * D,
                            D * sizeof(double));
    Id id = emplace(std::move(out), track(x), {});
    if (nodes_[id].needs_grad) {
        nodes_[id].backprop = [this, id, x, B, H, T, D]() {
            const Tensor& g = nodes_[id].grad;
            Tensor& dx = gbuf(x);
            for (int64_t b = 0; b < B; ++b)
                for (int64_t h = 0; h < H; ++h)
                    for (int64_t t = 0; t < T; ++t)
                        for (int64_t d = 0; d < D; ++d)
                            dx.data[((b * H + h) * T + t) * D + d] +=
                                g.data[((b * T + t) * H + h) * D + d];
        };
    }
    return id;
}

Tape::Id Tape::qk_norm(Id x, Id scale, double eps) {
    const Tensor& xv = nodes_[x].value;
    check(xv.rank() == 4, "qk_norm: expected [B,H,T,D]");
    const int64_t H = xv.dim(1), T = xv.dim(2), D = xv.dim(3);
    const int64_t B = xv.dim(0);
    check(nodes_[scale].value.numel() == H, "qk_norm: scale size mismatch");
    Tensor out(xv.shape);
    std::vector<double> rms(B * H * T);
    const double* sv = nodes_[scale].value.data.data();
    for (int64_t r = 0; r < B * H * T; ++r) {
        const int64_t h = (r / T) % H;
        const double* xr = xv.data.data() + r * D;
        double acc = 0.0;
        for (int64_t d = 0; d < D; ++d) acc += xr[d] * xr[d];
        rms[r] = std::sqrt(acc / static_cast<double>(D) + eps);
        const double f = sv[h] / rms[r];
        double* yr = out.data.data() + r * D;
        for (int64_t d = 0; d < D; ++d) yr[d] = xr[d] * f;
    }
    const bool needs = track(x) || track(scale);
    Id id = emplace(std::move(out), needs, {});
    if (nodes_[id].needs_grad) {
        nodes_[id].backprop = [this, id, x, scale, B, H, T, D, rms = std::move(rms)]() {
            const Tensor& g = nodes_[id].grad;
            const Tensor& xv2 = nodes_[x].value;
            const double* sv2 = nodes_[scale].value.data.data();
            if (track(x)) {
                Tensor& dx = gbuf(x);
                for (int64_t r = 0; r < B * H * T; ++r) {
                    const int64_t h = (r / T) % H;
                    const double* xr = xv2.data.data() + r * D;
                    const double* gr = g.data.data() + r * D;
                    double* dxr = dx.data.data() + r * D;
                    double dot = 0.0;
                    for (int64_t d = 0; d < D; ++d) dot += gr[d] * xr[d];
                    const double inv = 1.0 / rms[r];
                    const double k = sv2[h] * dot * inv * inv * inv / static_cast<double>(D);
                    for (int64_t d = 0; d < D; ++d)
                        dxr[d] += sv2[h] * gr[d] * inv - xr[d] * k;
                }
            }
            if (track(scale)) {
                Tensor& ds = gbuf(scale);
                for (int64_t r = 0; r < B * H * T; ++r) {
                    const int64_t h = (r / T) % H;
                    const double* xr = xv2.data.data() + r * D;
                    const double* gr = g.data.data() + r * D;
                    const double inv = 1.0 / rms[r];
                    double acc = 0.0;
                    for (int64_t d = 0; d < D; ++d) acc += gr[d] * xr[d] * inv;
                    ds.data[h] += acc;
                }
            }
        };
    }
    return id;
}

Tape::Id Tape::rope(Id x, double base) {
    const Tensor& xv = nodes_[x].value;
    check(xv.rank() == 4 && xv.dim(3) % 2 == 0, "rope: expected [B,H,T,D], even D");
    const int64_t B = xv.dim(0), H = xv.dim(1), T = xv.dim(2), D = xv.dim(3);
    std::vector<double> cs(T * D / 2), sn(T * D / 2);
    for (int64_t t = 0; t < T; ++t)
        for (int64_t i = 0; i < D / 2; ++i) {
            const double theta =
                std::pow(base, -2.0 * static_cast<double>(i) / static_cast<double>(D));
            const double ang = static_cast<double>(t) * theta;
            cs[t * D / 2 + i] = std::cos(ang);
            sn[t * D / 2 + i] = std::sin(ang);
        }
    Tensor out(xv.shape);
    for (int64_t bh = 0; bh < B * H; ++bh)
        for (int64_t t = 0; t < T; ++t) {
            const double* xr = xv.data.data() + (bh * T + t) * D;
            double* yr = out.data.data() + (bh * T + t) * D;
            for (int64_t i = 0; i < D / 2; ++i) {
                const double c = cs[t * D / 2 + i], s = sn[t * D / 2 + i];
                yr[2 * i] = xr[2 * i] * c - xr[2 * i + 1] * s;
                yr[2 * i + 1] = xr[2 * i] * s + xr[2 * i + 1] * c;
            }
        }
    Id id = emplace(std::move(out), track(x), {});
    if (nodes_[id].needs_grad) {
        nodes_[id].backprop =
            [this, id, x, B, H, T, D, cs = std::move(cs), sn = std::move(sn)]() {
                const Tensor& g = nodes_[id].grad;
                Tensor& dx = gbuf(x);
                for (int64_t bh = 0; bh < B * H; ++bh)
                    for (int64_t t = 0; t < T; ++t) {
                        const double* gr = g.data.data() + (bh * T + t) * D;
                        double* dxr = dx.data.data() + (bh * T + t) * D;
                        for (int64_t i = 0; i < D / 2; ++i) {
                            const double c = cs[t * D / 2 + i], s = sn[t * D / 2 + i];
                            dxr[2 * i] += gr[2 * i] * c + gr[2 * i + 1] * s;
                            dxr[2 * i + 1] += -gr[2 * i] * s + gr[2 * i + 1] * c;
                        }
                    }
            };
    }
    return id;
}

namespace {

// Flatten [..., M, D] into G batched matrices; leading dims must match.
int64_t batch_of(const Tensor& t) {
    int64_t g = 1;
    for (int i = 0; i + 2 < t.rank(); ++i) g *= t.dim(i);
    return g;
}

}  // namespace

Tape::Id Tape::bmm_nt(Id a, Id b) {
    const Tensor& av = nodes_[a].value;
    const Tensor& bv = nodes_[b].value;
    check(av.rank() == bv.rank() && av.rank() >= 2, "bmm_nt: rank mismatch");
    const int64_t G = batch_of(av);
    check(G == batch_of(bv), "bmm_nt: batch mismatch");
    const int64_t M = av.dim(av.rank() - 2), D = av.shape.back();
    const int64_t N = bv.dim(bv.rank() - 2);
    check(bv.shape.back() == D, "bmm_nt: inner dim mismatch");
    std::vector<int64_t> oshape(av.shape.begin(), av.shape.end() - 2);
    oshape.push_back(M);
    oshape.push_back(N);
    Tensor out(oshape);
    kernels::bmm_nt(av.data.data(), bv.data.data(), out.data.data(), G, M, N, D);
    Id id = emplace(std::move(out), track(a) || track(b), {});
    if (nodes_[id].needs_grad) {
        nodes_[id].backprop = [this, id, a, b, G, M, N, D]() {
            const Tensor& g = nodes_[id].grad;
            if (track(a)) {
                Tensor da(nodes_[a].value.shape);
                kernels::bmm_nn(g.data.data(), nodes_[b].value.data.data(), da.data.data(), G,
                                M, N, D);
                accumulate(gbuf(a), da);
            }
            if (track(b)) {
                Tensor db(nodes_[b].value.shape);
                kernels::bmm_tn(g.data.data(), nodes_[a].value.data.data(), db.data.data(), G,
                                M, N, D);
                accumulate(gbuf(b), db);
            }
        };
    }
    return id;
}

Tape::Id Tape::bmm_nn(Id a, Id b) {
    const Tensor& av = nodes_[a].value;
    const Tensor& bv = nodes_[b].value;
    check(av.rank() == bv.rank() && av.rank() >= 2, "bmm_nn: rank mismatch");
    const int64_t G = batch_of(av);
    check(G == batch_of(bv), "bmm_nn: batch mismatch");
    const int64_t M = av.dim(av.rank() - 2), N = av.shape.back();
    const int64_t D = bv.shape.back();
    check(bv.dim(bv.rank() - 2) == N, "bmm_nn: inner dim mismatch");
    std::vector<int64_t> oshape(av.shape.begin(), av.shape.end() - 2);
    oshape.push_back(M);
    oshape.push_back(D);
    Tensor out(oshape);
    kernels::bmm_nn(av.data.data(), bv.data.data(), out.data.data(), G, M, N, D);
    Id id = emplace(std::move(out), track(a) || track(b), {});
    if (nodes_[id].needs_grad) {
        nodes_[id].backprop = [this, id, a, b, G, M, N, D]() {
            const Tensor& g = nodes_[id].grad;
            if (track(a)) {
                Tensor da(nodes_[a].value.shape);
                kernels::bmm_nt(g.data.data(), nodes_[b].value.data.data(), da.data.data(), G,
                                M, N, D);
                accumulate(gbuf(a), da);
            }
            if (track(b)) {
                Tensor db(nodes_[b].value.shape);
                kernels::bmm_tn(nodes_[a].value.data.data(), g.data.data(), db.data.data(), G,
                                M, N, D);
                accumulate(gbuf(b), db);
            }
        };
    }
    return id;
}

Tape::Id Tape::softmax(Id x, std::vector<int64_t> valid) {
    const Tensor& xv = nodes_[x].value;
    const int64_t C = xv.shape.back();
    const int64_t R = xv.numel() / C;
    check(valid.empty() || static_cast<int64_t>(valid.size()) == R,
          "softmax: valid length count mismatch");
    Tensor out(xv.shape);
    kernels::softmax_rows(xv.data.data(), out.data.data(), R, C,
                          valid.empty() ? nullptr : valid.data());
    Id id = emplace(std::move(out), track(x), {});
    if (nodes_[id].needs_grad) {
        nodes_[id].backprop = [this, id, x, R, C]() {
            const Tensor& g = nodes_[id].grad;
            Tensor dx(nodes_[x].value.shape);
            kernels::softmax_rows_dx(nodes_[id].value.data.data(), g.data.data(),
                                     dx.data.data(), R, C);
            accumulate(gbuf(x), dx);
        };
    }
    return id;
}

Tape::Id Tape::mean_time(Id x) {
    const Tensor& xv = nodes_[x].value;
    check(xv.rank() == 3, "mean_time: expected [B,T,C]");
    const int64_t B = xv.dim(0), T = xv.dim(1), C = xv.dim(2);
    Tensor out({B, C});
    const double inv = 1.0 / static_cast<double>(T);
    for (int64_t b = 0; b < B; ++b)
        for (int64_t t = 0; t < T; ++t)
            for (int64_t c = 0; c < C; ++c)
                out.data[b * C + c] += xv.data[(b * T + t) * C + c] * inv;
    Id id = emplace(std::move(out), track(x), {});
    if (nodes_[id].needs_grad) {
        nodes_[id].backprop = [this, id, x, B, T, C, inv]() {
            const Tensor& g = nodes_[id].grad;
            Tensor& dx = gbuf(x);
            for (int64_t b = 0; b < B; ++b)
                for (int64_t t = 0; t < T; ++t)
                    for (int64_t c = 0; c < C; ++c)
                        dx.data[(b * T + t) * C + c] += g.data[b * C + c] * inv;
        };
    }
    return id;
}

// ---- complex ops ------------------------------------------------------------

Tape::Id Tape::cmul_const(Id x, IqBuffer c) {
    const Tensor& xv = nodes_[x].value;
    check(xv.rank() == 3 && xv.dim(2) == 2, "cmul_const: expected [B,T,2]");
    const int64_t B = xv.dim(0), T = xv.dim(1);
    check(static_cast<int64_t>(c.size()) == T, "cmul_const: constant length mismatch");
    Tensor out(xv.shape);
    for (int64_t b = 0; b < B; ++b)
        for (int64_t t = 0; t < T; ++t) {
            const int64_t i = (b * T + t) * 2;
            const cplx v(xv.data[i], xv.data[i + 1]);
            const cplx y = v * c[t];
            out.data[i] = y.real();
            out.data[i + 1] = y.imag();
        }
    Id id = emplace(std::move(out), track(x), {});
    if (nodes_[id].needs_grad) {
        nodes_[id].backprop = [this, id, x, B, T, c = std::move(c)]() {
            const Tensor& g = nodes_[id].grad;
            Tensor& dx = gbuf(x);
            for (int64_t b = 0; b < B; ++b)
                for (int64_t t = 0; t < T; ++t) {
                    const int64_t i = (b * T + t) * 2;
                    const cplx gv(g.data[i], g.data[i + 1]);
                    const cplx d = gv * std::conj(c[t]);
                    dx.data[i] += d.real();
                    dx.data[i + 1] += d.imag();
                }
        };
    }
    return id;
}

Tape::Id Tape::fft_c(Id x) {
    const Tensor& xv = nodes_[x].value;
    check(xv.rank() == 3 && xv.dim(2) == 2, "fft_c: expected [B,T,2]");
    const int64_t B = xv.dim(0), T = xv.dim(1);
    Tensor out = xv;
    kernels::fft_batch(reinterpret_cast<cplx*>(out.data.data()), B, T, false);
    Id id = emplace(std::move(out), track(x), {});
    if (nodes_[id].needs_grad) {
        nodes_[id].backprop = [this, id, x, B, T]() {
            // adjoint of the unnormalized DFT is the unnormalized inverse DFT
            Tensor dg = nodes_[id].grad;
            kernels::fft_batch(reinterpret_cast<cplx*>(dg.data.data()), B, T, true);
            accumulate(gbuf(x), dg);
        };
    }
    return id;
}

Tape::Id Tape::stft_c(Id x, StftConfig cfg) {
    cfg.validate();
    const Tensor& xv = nodes_[x].value;
    check(xv.rank() == 3 && xv.dim(2) == 2, "stft_c: expected [B,L,2]");
    const int64_t B = xv.dim(0), L = xv.dim(1);
    const int64_t W = cfg.window_size, H = cfg.hop, P = W / 2;
    check(L >= W, "stft_c: signal shorter than window");
    const int64_t F = 1 + L / H;
    const std::vector<double> win = hann_window(W);

    Tensor out({B, F, W, 2});
    for (int64_t b = 0; b < B; ++b) {
        const cplx* row = reinterpret_cast<const cplx*>(xv.data.data() + b * L * 2);
        IqBuffer padded(L + 2 * P);
        for (int64_t i = 0; i < P; ++i) padded[i] = row[P - i];
        for (int64_t i = 0; i < L; ++i) padded[P + i] = row[i];
        for (int64_t i = 0; i < P; ++i) padded[P + L + i] = row[L - 2 - i];
        cplx* frames = reinterpret_cast<cplx*>(out.data.data() + b * F * W * 2);
        for (int64_t f = 0; f < F; ++f)
            for (int64_t i = 0; i < W; ++i) frames[f * W + i] = padded[f * H + i] * win[i];
        kernels::fft_batch(frames, F, W, false);
    }
    Id id = emplace(std::move(out), track(x), {});
    if (nodes_[id].needs_grad) {
        nodes_[id].backprop = [this, id, x, B, L, W, H, P, F, win]() {
            Tensor dg = nodes_[id].grad;  // copy: transformed in place
            Tensor& dx = gbuf(x);
            for (int64_t b = 0; b < B; ++b) {
                cplx* frames = reinterpret_cast<cplx*>(dg.data.data() + b * F * W * 2);
                kernels::fft_batch(frames, F, W, true);  // adjoint of forward FFT
                IqBuffer dpad(L + 2 * P, cplx(0, 0));
                for (int64_t f = 0; f < F; ++f)
                    for (int64_t i = 0; i < W; ++i) dpad[f * H + i] += frames[f * W + i] * win[i];
                // adjoint of the reflection padding folds pad gradients back
                cplx* drow = reinterpret_cast<cplx*>(dx.data.data() + b * L * 2);
                for (int64_t i = 0; i < L; ++i) drow[i] += dpad[P + i];
                for (int64_t i = 0; i < P; ++i) drow[P - i] += dpad[i];
                for (int64_t i = 0; i < P; ++i) drow[L - 2 - i] += dpad[P + L + i];
            }
        };
    }
    return id;
}

// ---- losses ------------------------------------------------------------------

Tape::Id Tape::mse_vs(Id x, Tensor target) {
    const Tensor& xv = nodes_[x].value;
    check(xv.same_shape(target), "mse_vs: shape mismatch");
    const int64_t n = xv.numel();
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const double d = xv.data[i] - target.data[i];
        acc += d * d;
    }
    Id id = emplace(Tensor::scalar(acc / static_cast<double>(n)), track(x), {});
    if (nodes_[id].needs_grad) {
        nodes_[id].backprop = [this, id, x, target = std::move(target), n]() {
            const double g = nodes_[id].grad.data[0];
            Tensor& dx = gbuf(x);
            const double k = 2.0 * g / static_cast<double>(n);
            for (int64_t i = 0; i < n; ++i)
                dx.data[i] += k * (nodes_[x].value.data[i] - target.data[i]);
        };
    }
    return id;
}

Tape::Id Tape::huber_vs(Id x, Tensor target, double delta) {
    const Tensor& xv = nodes_[x].value;
    check(xv.same_shape(target), "huber_vs: shape mismatch");
    check(delta > 0.0, "huber_vs: delta must be positive");
    const int64_t n = xv.numel();
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const double d = std::abs(xv.data[i] - target.data[i]);
        acc += d <= delta ? 0.5 * d * d : delta * (d - 0.5 * delta);
    }
    Id id = emplace(Tensor::scalar(acc / static_cast<double>(n)), track(x), {});
    if (nodes_[id].needs_grad) {
        nodes_[id].backprop = [this, id, x, target = std::move(target), delta, n]() {
            const double g = nodes_[id].grad.data[0];
            Tensor& dx = gbuf(x);
            const double k = g / static_cast<double>(n);
            for (int64_t i = 0; i < n; ++i) {
                const double d = nodes_[x].value.data[i] - target.data[i];
                dx.data[i] += k * std::clamp(d, -delta, delta);
            }
        };
    }
    return id;
}

Tape::Id Tape::ce_zloss(Id logits, std::vector<int64_t> labels, double alpha) {
    const Tensor& lv = nodes_[logits].value;
    check(lv.rank() == 2, "ce_zloss: expected [B,M]");
    const int64_t B = lv.dim(0), M = lv.dim(1);
    check(static_cast<int64_t>(labels.size()) == B, "ce_zloss: label count mismatch");
    for (int64_t b = 0; b < B; ++b)
        check(labels[b] >= 0 && labels[b] < M, "ce_zloss: label out of range");

    Tensor probs({B, M});
    kernels::softmax_rows(lv.data.data(), probs.data.data(), B, M, nullptr);
    std::vector<double> lse(B);
    double loss = 0.0;
    for (int64_t b = 0; b < B; ++b) {
        const double* row = lv.data.data() + b * M;
        double mx = row[0];
        for (int64_t j = 1; j < M; ++j) mx = std::max(mx, row[j]);
        double s = 0.0;
        for (int64_t j = 0; j < M; ++j) s += std::exp(row[j] - mx);
        lse[b] = mx + std::log(s);
        loss += (lse[b] - row[labels[b]]) + alpha * lse[b] * lse[b];
    }
    loss /= static_cast<double>(B);
    Id id = emplace(Tensor::scalar(loss), track(logits), {});
    if (nodes_[id].needs_grad) {
        nodes_[id].backprop = [this, id, logits, labels = std::move(labels), alpha, B, M,
                               probs = std::move(probs), lse = std::move(lse)]() {
            const double g = nodes_[id].grad.data[0] / static_cast<double>(B);
            Tensor& dx = gbuf(logits);
            for (int64_t b = 0; b < B; ++b) {
                const double* p = probs.data.data() + b * M;
                const double f = 1.0 + 2.0 * alpha * lse[b];
                for (int64_t j = 0; j < M; ++j) dx.data[b * M + j] += g * p[j] * f;
                dx.data[b * M + labels[b]] -= g;
            }
        };
    }
    return id;
}

void Tape::backward(Id loss) {
    if (!record_) throw std::logic_error("backward on a non-recording tape");
    if (ran_backward_) throw std::logic_error("backward already ran on this tape");
    check(nodes_[loss].value.numel() == 1, "backward: loss must be scalar");
    ran_backward_ = true;
    gbuf(loss).data[0] = 1.0;
    for (Id id = static_cast<Id>(nodes_.size()) - 1; id >= 0; --id) {
        Node& n = nodes_[id];
        if (n.needs_grad && n.backprop && !n.grad.data.empty()) n.backprop();
    }
}

std::vector<double> fourier_features(double t, int n) {
    if (n < 1) throw std::invalid_argument("fourier_features: n must be >= 1");
    std::vector<double> out(2 * n);
    for (int i = 0; i < n; ++i) {
        const double f =
            n == 1 ? 1.0 : std::pow(10.0, 3.0 * static_cast<double>(i) / static_cast<double>(n - 1));
        out[i] = std::sin(2.0 * M_PI * f * t);
        out[n + i] = std::cos(2.0 * M_PI * f * t);
    }
    return out;
}

}  // namespace loraflow
