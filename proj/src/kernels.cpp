#include "loraflow/kernels.hpp"

#include <omp.h>

#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>
#include <vector>

namespace loraflow::kernels {

int max_threads() { return omp_get_max_threads(); }

void set_threads(int n) {
    if (n > 0) omp_set_num_threads(n);
}

// ---- dense linear algebra -------------------------------------------------

void matmul(const double* x, const double* w, const double* bias, double* y,
            int64_t M, int64_t K, int64_t N) {
#pragma omp parallel for schedule(static)
    for (int64_t m = 0; m < M; ++m) {
        double* yr = y + m * N;
        if (bias) {
            for (int64_t n = 0; n < N; ++n) yr[n] = bias[n];
        } else {
            for (int64_t n = 0; n < N; ++n) yr[n] = 0.0;
        }
        const double* xr = x + m * K;
        for (int64_t k = 0; k < K; ++k) {
            const double xv = xr[k];
            const double* wr = w + k * N;
            for (int64_t n = 0; n < N; ++n) yr[n] += xv * wr[n];
        }
    }
}

void matmul_a_bt(const double* a, const double* b, double* y,
                 int64_t M, int64_t N, int64_t K) {
#pragma omp parallel for schedule(static)
    for (int64_t m = 0; m < M; ++m) {
        const double* ar = a + m * N;
        double* yr = y + m * K;
        for (int64_t k = 0; k < K; ++k) {
            const double* br = b + k * N;
            double acc = 0.0;
            for (int64_t n = 0; n < N; ++n) acc += ar[n] * br[n];
            yr[k] = acc;
        }
    }
}

void matmul_at_b(const double* a, const double* b, double* y,
                 int64_t M, int64_t K, int64_t N) {
#pragma omp parallel for schedule(static)
    for (int64_t k = 0; k < K; ++k) {
        double* yr = y + k * N;
        for (int64_t n = 0; n < N; ++n) yr[n] = 0.0;
        for (int64_t m = 0; m < M; ++m) {
            const double av = a[m * K + k];
            const double* br = b + m * N;
            for (int64_t n = 0; n < N; ++n) yr[n] += av * br[n];
        }
    }
}

void bmm_nt(const double* a, const double* b, double* y,
            int64_t G, int64_t M, int64_t N, int64_t D) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t g = 0; g < G; ++g) {
        for (int64_t m = 0; m < M; ++m) {
            const double* ar = a + (g * M + m) * D;
            const double* bg = b + g * N * D;
            double* yr = y + (g * M + m) * N;
            for (int64_t n = 0; n < N; ++n) {
                const double* br = bg + n * D;
                double acc = 0.0;
                for (int64_t d = 0; d < D; ++d) acc += ar[d] * br[d];
                yr[n] = acc;
            }
        }
    }
}

void bmm_nn(const double* a, const double* b, double* y,
            int64_t G, int64_t M, int64_t N, int64_t D) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t g = 0; g < G; ++g) {
        for (int64_t m = 0; m < M; ++m) {
            const double* ar = a + (g * M + m) * N;
            const double* bg = b + g * N * D;
            double* yr = y + (g * M + m) * D;
            for (int64_t d = 0; d < D; ++d) yr[d] = 0.0;
            for (int64_t n = 0; n < N; ++n) {
                const double av = ar[n];
                const double* br = bg + n * D;
                for (int64_t d = 0; d < D; ++d) yr[d] += av * br[d];
            }
        }
    }
}

void bmm_tn(const double* a, const double* b, double* y,
            int64_t G, int64_t M, int64_t N, int64_t D) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t g = 0; g < G; ++g) {
        for (int64_t n = 0; n < N; ++n) {
            const double* ag = a + g * M * N;
            const double* bg = b + g * M * D;
            double* yr = y + (g * N + n) * D;
            for (int64_t d = 0; d < D; ++d) yr[d] = 0.0;
            for (int64_t m = 0; m < M; ++m) {
                const double av = ag[m * N + n];
                const double* br = bg + m * D;
                for (int64_t d = 0; d < D; ++d) yr[d] += av * br[d];
            }
        }
    }
}

// ---- conv1d ----------------------------------------------------------------

static inline int64_t conv_out_len(int64_t T, int64_t K, int64_t stride, int64_t pad) {
    return (T + 2 * pad - K) / stride + 1;
}

void conv1d(const double* x, const double* w, const double* bias, double* y,
            int64_t B, int64_t T, int64_t Cin, int64_t Cout,
            int64_t K, int64_t stride, int64_t pad) {
    const int64_t To = conv_out_len(T, K, stride, pad);
#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t b = 0; b < B; ++b) {
        for (int64_t to = 0; to < To; ++to) {
            double* yr = y + (b * To + to) * Cout;
            if (bias) {
                for (int64_t co = 0; co < Cout; ++co) yr[co] = bias[co];
            } else {
                for (int64_t co = 0; co < Cout; ++co) yr[co] = 0.0;
            }
            for (int64_t k = 0; k < K; ++k) {
                const int64_t t = to * stride + k - pad;
                if (t < 0 || t >= T) continue;
                const double* xr = x + (b * T + t) * Cin;
                const double* wk = w + k * Cin * Cout;
                for (int64_t ci = 0; ci < Cin; ++ci) {
                    const double xv = xr[ci];
                    const double* wr = wk + ci * Cout;
                    for (int64_t co = 0; co < Cout; ++co) yr[co] += xv * wr[co];
                }
            }
        }
    }
}

void conv1d_dx(const double* dy, const double* w, double* dx,
               int64_t B, int64_t T, int64_t Cin, int64_t Cout,
               int64_t K, int64_t stride, int64_t pad) {
    const int64_t To = conv_out_len(T, K, stride, pad);
#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t b = 0; b < B; ++b) {
        for (int64_t t = 0; t < T; ++t) {
            double* dxr = dx + (b * T + t) * Cin;
            for (int64_t ci = 0; ci < Cin; ++ci) dxr[ci] = 0.0;
            for (int64_t k = 0; k < K; ++k) {
                const int64_t num = t + pad - k;
                if (num < 0 || num % stride != 0) continue;
                const int64_t to = num / stride;
                if (to >= To) continue;
                const double* dyr = dy + (b * To + to) * Cout;
                const double* wk = w + k * Cin * Cout;
                for (int64_t ci = 0; ci < Cin; ++ci) {
                    const double* wr = wk + ci * Cout;
                    double acc = 0.0;
                    for (int64_t co = 0; co < Cout; ++co) acc += dyr[co] * wr[co];
                    dxr[ci] += acc;
                }
            }
        }
    }
}

void conv1d_dw(const double* x, const double* dy, double* dw,
               int64_t B, int64_t T, int64_t Cin, int64_t Cout,
               int64_t K, int64_t stride, int64_t pad) {
    const int64_t To = conv_out_len(T, K, stride, pad);
#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t k = 0; k < K; ++k) {
        for (int64_t ci = 0; ci < Cin; ++ci) {
            double* dwr = dw + (k * Cin + ci) * Cout;
            for (int64_t co = 0; co < Cout; ++co) dwr[co] = 0.0;
            for (int64_t b = 0; b < B; ++b) {
                for (int64_t to = 0; to < To; ++to) {
                    const int64_t t = to * stride + k - pad;
                    if (t < 0 || t >= T) continue;
                    const double xv = x[(b * T + t) * Cin + ci];
                    const double* dyr = dy + (b * To + to) * Cout;
                    for (int64_t co = 0; co < Cout; ++co) dwr[co] += xv * dyr[co];
                }
            }
        }
    }
}

void conv1d_db(const double* dy, double* db, int64_t B, int64_t To, int64_t Cout) {
#pragma omp parallel for schedule(static)
    for (int64_t co = 0; co < Cout; ++co) {
        double acc = 0.0;
        for (int64_t i = 0; i < B * To; ++i) acc += dy[i * Cout + co];
        db[co] = acc;
    }
}

// ---- elementwise / rows ----------------------------------------------------

static inline double gelu_one(double v) {
    return 0.5 * v * (1.0 + std::erf(v * M_SQRT1_2));
}

void gelu(const double* x, double* y, int64_t n) {
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) y[i] = gelu_one(x[i]);
}

void gelu_dx(const double* x, const double* dy, double* dx, int64_t n) {
    constexpr double inv_sqrt_2pi = 0.3989422804014326779;
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) {
        const double v = x[i];
        const double cdf = 0.5 * (1.0 + std::erf(v * M_SQRT1_2));
        const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
        dx[i] = dy[i] * (cdf + v * pdf);
    }
}

void softmax_rows(const double* x, double* y, int64_t rows, int64_t n,
                  const int64_t* valid) {
#pragma omp parallel for schedule(static)
    for (int64_t r = 0; r < rows; ++r) {
        const double* xr = x + r * n;
        double* yr = y + r * n;
        const int64_t nv = valid ? valid[r] : n;
        double mx = -1e300;
        for (int64_t i = 0; i < nv; ++i) mx = std::max(mx, xr[i]);
        double denom = 0.0;
        for (int64_t i = 0; i < nv; ++i) {
            yr[i] = std::exp(xr[i] - mx);
            denom += yr[i];
        }
        const double inv = 1.0 / denom;
        for (int64_t i = 0; i < nv; ++i) yr[i] *= inv;
        for (int64_t i = nv; i < n; ++i) yr[i] = 0.0;
    }
}

void softmax_rows_dx(const double* p, const double* dy, double* dx,
                     int64_t rows, int64_t n) {
#pragma omp parallel for schedule(static)
    for (int64_t r = 0; r < rows; ++r) {
        const double* pr = p + r * n;
        const double* dyr = dy + r * n;
        double* dxr = dx + r * n;
        double dot = 0.0;
        for (int64_t i = 0; i < n; ++i) dot += pr[i] * dyr[i];
        for (int64_t i = 0; i < n; ++i) dxr[i] = pr[i] * (dyr[i] - dot);
    }
}

void axpy(double* dst, double a, const double* x, int64_t n) {
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) dst[i] += a * x[i];
}

// ---- FFT -------------------------------------------------------------------

namespace {

const std::vector<cplx>& twiddles(int64_t n) {
    static std::map<int64_t, std::vector<cplx>> cache;
    static std::mutex mu;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
    std::vector<cplx> tw(n / 2);
    for (int64_t i = 0; i < n / 2; ++i) {
        const double ang = -2.0 * M_PI * static_cast<double>(i) / static_cast<double>(n);
        tw[i] = cplx(std::cos(ang), std::sin(ang));
    }
    return cache.emplace(n, std::move(tw)).first->second;
}

void fft_core(cplx* x, int64_t n, bool inverse, const std::vector<cplx>& tw) {
    // bit-reversal permutation
    for (int64_t i = 1, j = 0; i < n; ++i) {
        int64_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(x[i], x[j]);
    }
    for (int64_t len = 2; len <= n; len <<= 1) {
        const int64_t half = len >> 1;
        const int64_t step = n / len;
        for (int64_t i = 0; i < n; i += len) {
            for (int64_t k = 0; k < half; ++k) {
                cplx w = tw[k * step];
                if (inverse) w = std::conj(w);
                const cplx u = x[i + k];
                const cplx t = w * x[i + k + half];
                x[i + k] = u + t;
                x[i + k + half] = u - t;
            }
        }
    }
}

}  // namespace

void fft_inplace(cplx* x, int64_t n, bool inverse) {
    if (n <= 0 || (n & (n - 1)) != 0)
        throw std::invalid_argument("fft: length must be a power of two");
    if (n == 1) return;
    fft_core(x, n, inverse, twiddles(n));
}

void fft_batch(cplx* x, int64_t batch, int64_t n, bool inverse) {
    if (n <= 0 || (n & (n - 1)) != 0)
        throw std::invalid_argument("fft: length must be a power of two");
    if (n == 1) return;
    const std::vector<cplx>& tw = twiddles(n);
#pragma omp parallel for schedule(static)
    for (int64_t b = 0; b < batch; ++b) fft_core(x + b * n, n, inverse, tw);
}

IqBuffer fft(const IqBuffer& x) {
    IqBuffer y = x;
    fft_inplace(y.data(), static_cast<int64_t>(y.size()), false);
    return y;
}

IqBuffer ifft(const IqBuffer& x) {
    IqBuffer y = x;
    const int64_t n = static_cast<int64_t>(y.size());
    fft_inplace(y.data(), n, true);
    const double s = 1.0 / static_cast<double>(n);
    for (cplx& v : y) v *= s;
    return y;
}

// ---- serial references ------------------------------------------------------

namespace serial {

void matmul(const double* x, const double* w, const double* bias, double* y,
            int64_t M, int64_t K, int64_t N) {
    for (int64_t m = 0; m < M; ++m) {
        double* yr = y + m * N;
        for (int64_t n = 0; n < N; ++n) yr[n] = bias ? bias[n] : 0.0;
        const double* xr = x + m * K;
        for (int64_t k = 0; k < K; ++k) {
            const double xv = xr[k];
            const double* wr = w + k * N;
            for (int64_t n = 0; n < N; ++n) yr[n] += xv * wr[n];
        }
    }
}

void conv1d(const double* x, const double* w, const double* bias, double* y,
            int64_t B, int64_t T, int64_t Cin, int64_t Cout,
            int64_t K, int64_t stride, int64_t pad) {
    const int64_t To = conv_out_len(T, K, stride, pad);
    for (int64_t b = 0; b < B; ++b) {
        for (int64_t to = 0; to < To; ++to) {
            double* yr = y + (b * To + to) * Cout;
            for (int64_t co = 0; co < Cout; ++co) yr[co] = bias ? bias[co] : 0.0;
            for (int64_t k = 0; k < K; ++k) {
                const int64_t t = to * stride + k - pad;
                if (t < 0 || t >= T) continue;
                const double* xr = x + (b * T + t) * Cin;
                const double* wk = w + k * Cin * Cout;
                for (int64_t ci = 0; ci < Cin; ++ci) {
                    for (int64_t co = 0; co < Cout; ++co)
                        yr[co] += xr[ci] * wk[ci * Cout + co];
                }
            }
        }
    }
}

void gelu(const double* x, double* y, int64_t n) {
    for (int64_t i = 0; i < n; ++i) y[i] = gelu_one(x[i]);
}

void softmax_rows(const double* x, double* y, int64_t rows, int64_t n,
                  const int64_t* valid) {
    for (int64_t r = 0; r < rows; ++r) {
        const double* xr = x + r * n;
        double* yr = y + r * n;
        const int64_t nv = valid ? valid[r] : n;
        double mx = -1e300;
        for (int64_t i = 0; i < nv; ++i) mx = std::max(mx, xr[i]);
        double denom = 0.0;
        for (int64_t i = 0; i < nv; ++i) {
            yr[i] = std::exp(xr[i] - mx);
            denom += yr[i];
        }
        const double inv = 1.0 / denom;
        for (int64_t i = 0; i < nv; ++i) yr[i] *= inv;
        for (int64_t i = nv; i < n; ++i) yr[i] = 0.0;
    }
}

void fft_batch(cplx* x, int64_t batch, int64_t n, bool inverse) {
    const std::vector<cplx>& tw = twiddles(n);
    for (int64_t b = 0; b < batch; ++b) fft_core(x + b * n, n, inverse, tw);
}

void dft(const cplx* in, cplx* out, int64_t n, bool inverse) {
    const double sign = inverse ? 1.0 : -1.0;
    for (int64_t k = 0; k < n; ++k) {
        cplx acc(0.0, 0.0);
        for (int64_t t = 0; t < n; ++t) {
            const double ang = sign * 2.0 * M_PI * static_cast<double>(k) *
                               static_cast<double>(t) / static_cast<double>(n);
            acc += in[t] * cplx(std::cos(ang), std::sin(ang));
        }
        out[k] = acc;
    }
}

}  // namespace serial

}  // namespace loraflow::kernels
