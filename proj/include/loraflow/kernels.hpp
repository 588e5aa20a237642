#pragma once

#include <cstdint>

#include "loraflow/iq.hpp"

// Data-parallel compute kernels. Every kernel distributes *independent output
// elements* across threads and never splits a single reduction, so results
// are bit-identical for any thread count. The loraflow::kernels::serial
// namespace keeps plain single-threaded reference implementations; the test
// suite checks the pair for exact equality and the bench target compares
// their throughput.
namespace loraflow::kernels {

int max_threads();
void set_threads(int n);

// ---- dense linear algebra -------------------------------------------------

// y[M,N] = x[M,K] * w[K,N] (+ bias[N] when bias != nullptr)
void matmul(const double* x, const double* w, const double* bias, double* y,
            int64_t M, int64_t K, int64_t N);

// y[M,K] = a[M,N] * b[K,N]^T
void matmul_a_bt(const double* a, const double* b, double* y,
                 int64_t M, int64_t N, int64_t K);

// y[K,N] = a[M,K]^T * b[M,N]
void matmul_at_b(const double* a, const double* b, double* y,
                 int64_t M, int64_t K, int64_t N);

// Batched forms used by attention; G independent [.,.] problems.
// y[G,M,N] = a[G,M,D] * b[G,N,D]^T
void bmm_nt(const double* a, const double* b, double* y,
            int64_t G, int64_t M, int64_t N, int64_t D);
// y[G,M,D] = a[G,M,N] * b[G,N,D]
void bmm_nn(const double* a, const double* b, double* y,
            int64_t G, int64_t M, int64_t N, int64_t D);
// y[G,N,D] = sum_m a[G,M,N][:,m,:]^T outer b[G,M,D][:,m,:]
void bmm_tn(const double* a, const double* b, double* y,
            int64_t G, int64_t M, int64_t N, int64_t D);

// ---- 1-d convolution, channels-last x[B,T,C], w[K,Cin,Cout] ----------------

void conv1d(const double* x, const double* w, const double* bias, double* y,
            int64_t B, int64_t T, int64_t Cin, int64_t Cout,
            int64_t K, int64_t stride, int64_t pad);
void conv1d_dx(const double* dy, const double* w, double* dx,
               int64_t B, int64_t T, int64_t Cin, int64_t Cout,
               int64_t K, int64_t stride, int64_t pad);
void conv1d_dw(const double* x, const double* dy, double* dw,
               int64_t B, int64_t T, int64_t Cin, int64_t Cout,
               int64_t K, int64_t stride, int64_t pad);
void conv1d_db(const double* dy, double* db,
               int64_t B, int64_t To, int64_t Cout);

// ---- elementwise / rows ----------------------------------------------------

void gelu(const double* x, double* y, int64_t n);
void gelu_dx(const double* x, const double* dy, double* dx, int64_t n);

// Row-wise softmax; when valid != nullptr, row r only attends to the first
// valid[r] entries and the rest are forced to zero probability.
void softmax_rows(const double* x, double* y, int64_t rows, int64_t n,
                  const int64_t* valid);
// dx = p .* (dy - sum(p .* dy)) per row
void softmax_rows_dx(const double* p, const double* dy, double* dx,
                     int64_t rows, int64_t n);

// dst += a * x
void axpy(double* dst, double a, const double* x, int64_t n);

// ---- FFT -------------------------------------------------------------------

// In-place radix-2 FFT; n must be a power of two. Unnormalized in both
// directions (inverse does NOT divide by n).
void fft_inplace(cplx* x, int64_t n, bool inverse);
// Batch of independent transforms, parallel over the batch.
void fft_batch(cplx* x, int64_t batch, int64_t n, bool inverse);

IqBuffer fft(const IqBuffer& x);   // forward, unnormalized
IqBuffer ifft(const IqBuffer& x);  // inverse, scaled by 1/n

namespace serial {

void matmul(const double* x, const double* w, const double* bias, double* y,
            int64_t M, int64_t K, int64_t N);
void conv1d(const double* x, const double* w, const double* bias, double* y,
            int64_t B, int64_t T, int64_t Cin, int64_t Cout,
            int64_t K, int64_t stride, int64_t pad);
void gelu(const double* x, double* y, int64_t n);
void softmax_rows(const double* x, double* y, int64_t rows, int64_t n,
                  const int64_t* valid);
void fft_batch(cplx* x, int64_t batch, int64_t n, bool inverse);
// Naive O(n^2) DFT, the independent oracle for the radix-2 FFT.
void dft(const cplx* in, cplx* out, int64_t n, bool inverse);

}  // namespace serial

}  // namespace loraflow::kernels
