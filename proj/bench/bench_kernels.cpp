// Throughput comparison between the serial reference kernels and the
// OpenMP-parallel ones, plus an end-to-end model forward timing.
// Run with --quick for a fast smoke pass (used by ctest).

#include <chrono>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "loraflow/kernels.hpp"
#include "loraflow/model.hpp"
#include "loraflow/rng.hpp"

using namespace loraflow;

namespace {

using clock_type = std::chrono::steady_clock;

double time_ms(int reps, const std::function<void()>& fn) {
    fn();  // warm up
    const auto t0 = clock_type::now();
    for (int i = 0; i < reps; ++i) fn();
    const auto t1 = clock_type::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

std::vector<double> randv(int64_t n, uint64_t seed) {
    Rng rng(seed);
    std::vector<double> v(n);
    for (auto& x : v) x = rng.gaussian();
    return v;
}

void row(const char* name, const char* size, double serial_ms, double parallel_ms) {
    std::printf("%-14s %-26s %10.3f %12.3f %9.2fx\n", name, size, serial_ms, parallel_ms,
                serial_ms / parallel_ms);
}

}  // namespace

int main(int argc, char** argv) {
    const bool quick = argc > 1 && std::strcmp(argv[1], "--quick") == 0;
    const int reps = quick ? 2 : 20;
    std::printf("threads: %d\n", kernels::max_threads());
    std::printf("%-14s %-26s %10s %12s %10s\n", "kernel", "size", "serial ms", "parallel ms",
                "speedup");

    {
        const int64_t M = quick ? 128 : 1024, K = 64, N = 192;
        const auto x = randv(M * K, 1), w = randv(K * N, 2), b = randv(N, 3);
        std::vector<double> y(M * N);
        const double s = time_ms(reps, [&] {
            kernels::serial::matmul(x.data(), w.data(), b.data(), y.data(), M, K, N);
        });
        const double p = time_ms(
            reps, [&] { kernels::matmul(x.data(), w.data(), b.data(), y.data(), M, K, N); });
        char size[64];
        std::snprintf(size, sizeof(size), "%ldx%ld @ %ldx%ld", M, K, K, N);
        row("matmul", size, s, p);
    }
    {
        const int64_t B = quick ? 8 : 32, T = 64, Cin = 64, Cout = 128, K = 3;
        const auto x = randv(B * T * Cin, 4), w = randv(K * Cin * Cout, 5), b = randv(Cout, 6);
        std::vector<double> y(B * T * Cout);
        const double s = time_ms(reps, [&] {
            kernels::serial::conv1d(x.data(), w.data(), b.data(), y.data(), B, T, Cin, Cout, K,
                                    1, 1);
        });
        const double p = time_ms(reps, [&] {
            kernels::conv1d(x.data(), w.data(), b.data(), y.data(), B, T, Cin, Cout, K, 1, 1);
        });
        char size[64];
        std::snprintf(size, sizeof(size), "B%ld T%ld %ld->%ld k%ld", B, T, Cin, Cout, K);
        row("conv1d", size, s, p);
    }
    {
        const int64_t rows = quick ? 512 : 8192, n = 64;
        const auto x = randv(rows * n, 7);
        std::vector<double> y(rows * n);
        const double s = time_ms(
            reps, [&] { kernels::serial::softmax_rows(x.data(), y.data(), rows, n, nullptr); });
        const double p =
            time_ms(reps, [&] { kernels::softmax_rows(x.data(), y.data(), rows, n, nullptr); });
        char size[64];
        std::snprintf(size, sizeof(size), "%ld rows of %ld", rows, n);
        row("softmax", size, s, p);
    }
    {
        const int64_t n = quick ? 1 << 16 : 1 << 21;
        const auto x = randv(n, 8);
        std::vector<double> y(n);
        const double s = time_ms(reps, [&] { kernels::serial::gelu(x.data(), y.data(), n); });
        const double p = time_ms(reps, [&] { kernels::gelu(x.data(), y.data(), n); });
        char size[64];
        std::snprintf(size, sizeof(size), "%ld elements", n);
        row("gelu", size, s, p);
    }
    {
        const int64_t batch = quick ? 64 : 512, n = 128;
        Rng rng(9);
        IqBuffer x(batch * n);
        for (auto& v : x) v = rng.cgaussian();
        IqBuffer work = x;
        const double s = time_ms(reps, [&] {
            work = x;
            kernels::serial::fft_batch(work.data(), batch, n, false);
        });
        const double p = time_ms(reps, [&] {
            work = x;
            kernels::fft_batch(work.data(), batch, n, false);
        });
        char size[64];
        std::snprintf(size, sizeof(size), "%ld transforms of %ld", batch, n);
        row("fft_batch", size, s, p);
    }
    {
        ModelConfig cfg;
        cfg.sf_max = 5;
        ParamStore store;
        init_params(cfg, store, 1);
        const int64_t B = quick ? 4 : 32, T = 32;
        Tensor x({B, T, 2});
        Rng rng(10);
        for (auto& v : x.data) v = rng.gaussian();
        const std::vector<double> t(B, 0.3);
        const std::vector<CondVector> cond(B, CondVector::zeros());
        const int old_threads = kernels::max_threads();
        kernels::set_threads(1);
        const double s =
            time_ms(reps, [&] { velocity_batch(cfg, store, x, t, cond); });
        kernels::set_threads(old_threads);
        const double p =
            time_ms(reps, [&] { velocity_batch(cfg, store, x, t, cond); });
        char size[64];
        std::snprintf(size, sizeof(size), "w%d d%d B%ld T%ld", cfg.width, cfg.depth, B, T);
        row("model fwd", size, s, p);
    }
    return 0;
}
