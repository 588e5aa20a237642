#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "loraflow/kernels.hpp"
#include "loraflow/rng.hpp"

using namespace loraflow;

namespace {

std::vector<double> random_vec(int64_t n, uint64_t seed) {
    Rng rng(seed);
    std::vector<double> v(n);
    for (auto& x : v) x = rng.gaussian();
    return v;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) return false;
    for (size_t i = 0; i < a.size(); ++i)
        if (a[i] != b[i]) return false;
    return true;
}

}  // namespace

TEST_CASE("matmul matches serial reference bitwise") {
    const int64_t M = 37, K = 19, N = 23;
    const auto x = random_vec(M * K, 1);
    const auto w = random_vec(K * N, 2);
    const auto b = random_vec(N, 3);
    std::vector<double> y1(M * N), y2(M * N);
    kernels::matmul(x.data(), w.data(), b.data(), y1.data(), M, K, N);
    kernels::serial::matmul(x.data(), w.data(), b.data(), y2.data(), M, K, N);
    CHECK(bitwise_equal(y1, y2));

    kernels::matmul(x.data(), w.data(), nullptr, y1.data(), M, K, N);
    kernels::serial::matmul(x.data(), w.data(), nullptr, y2.data(), M, K, N);
    CHECK(bitwise_equal(y1, y2));
}

TEST_CASE("matmul transposed variants agree with direct computation") {
    const int64_t M = 8, N = 6, K = 5;
    const auto a = random_vec(M * N, 4);
    const auto b = random_vec(K * N, 5);
    std::vector<double> y(M * K);
    kernels::matmul_a_bt(a.data(), b.data(), y.data(), M, N, K);
    for (int64_t m = 0; m < M; ++m)
        for (int64_t k = 0; k < K; ++k) {
            double ref = 0.0;
            for (int64_t n = 0; n < N; ++n) ref += a[m * N + n] * b[k * N + n];
            CHECK(y[m * K + k] == doctest::Approx(ref).epsilon(1e-12));
        }

    const auto a2 = random_vec(M * K, 6);
    const auto b2 = random_vec(M * N, 7);
    std::vector<double> y2(K * N);
    kernels::matmul_at_b(a2.data(), b2.data(), y2.data(), M, K, N);
    for (int64_t k = 0; k < K; ++k)
        for (int64_t n = 0; n < N; ++n) {
            double ref = 0.0;
            for (int64_t m = 0; m < M; ++m) ref += a2[m * K + k] * b2[m * N + n];
            CHECK(y2[k * N + n] == doctest::Approx(ref).epsilon(1e-12));
        }
}

TEST_CASE("bmm variants agree with naive loops") {
    const int64_t G = 3, M = 4, N = 5, D = 6;
    const auto a = random_vec(G * M * D, 8);
    const auto b = random_vec(G * N * D, 9);
    std::vector<double> y(G * M * N);
    kernels::bmm_nt(a.data(), b.data(), y.data(), G, M, N, D);
    for (int64_t g = 0; g < G; ++g)
        for (int64_t m = 0; m < M; ++m)
            for (int64_t n = 0; n < N; ++n) {
                double ref = 0.0;
                for (int64_t d = 0; d < D; ++d)
                    ref += a[(g * M + m) * D + d] * b[(g * N + n) * D + d];
                CHECK(y[(g * M + m) * N + n] == doctest::Approx(ref).epsilon(1e-12));
            }

    const auto p = random_vec(G * M * N, 10);
    std::vector<double> o(G * M * D);
    kernels::bmm_nn(p.data(), b.data(), o.data(), G, M, N, D);
    for (int64_t g = 0; g < G; ++g)
        for (int64_t m = 0; m < M; ++m)
            for (int64_t d = 0; d < D; ++d) {
                double ref = 0.0;
                for (int64_t n = 0; n < N; ++n)
                    ref += p[(g * M + m) * N + n] * b[(g * N + n) * D + d];
                CHECK(o[(g * M + m) * D + d] == doctest::Approx(ref).epsilon(1e-12));
            }

    const auto q = random_vec(G * M * D, 11);
    std::vector<double> z(G * N * D);
    kernels::bmm_tn(p.data(), q.data(), z.data(), G, M, N, D);
    for (int64_t g = 0; g < G; ++g)
        for (int64_t n = 0; n < N; ++n)
            for (int64_t d = 0; d < D; ++d) {
                double ref = 0.0;
                for (int64_t m = 0; m < M; ++m)
                    ref += p[(g * M + m) * N + n] * q[(g * M + m) * D + d];
                CHECK(z[(g * N + n) * D + d] == doctest::Approx(ref).epsilon(1e-12));
            }
}

TEST_CASE("conv1d matches serial reference bitwise") {
    const int64_t B = 3, T = 17, Cin = 4, Cout = 5, K = 3;
    const auto x = random_vec(B * T * Cin, 12);
    const auto w = random_vec(K * Cin * Cout, 13);
    const auto b = random_vec(Cout, 14);
    for (int64_t stride : {int64_t{1}, int64_t{2}}) {
        const int64_t pad = 1;
        const int64_t To = (T + 2 * pad - K) / stride + 1;
        std::vector<double> y1(B * To * Cout), y2(B * To * Cout);
        kernels::conv1d(x.data(), w.data(), b.data(), y1.data(), B, T, Cin, Cout, K, stride, pad);
        kernels::serial::conv1d(x.data(), w.data(), b.data(), y2.data(), B, T, Cin, Cout, K,
                                stride, pad);
        CHECK(bitwise_equal(y1, y2));
    }
}

TEST_CASE("conv1d_dx and conv1d_dw agree with finite differences of conv1d") {
    const int64_t B = 2, T = 9, Cin = 3, Cout = 2, K = 3, stride = 1, pad = 1;
    const int64_t To = (T + 2 * pad - K) / stride + 1;
    auto x = random_vec(B * T * Cin, 15);
    auto w = random_vec(K * Cin * Cout, 16);
    const auto dy = random_vec(B * To * Cout, 17);

    auto loss = [&](const std::vector<double>& xv, const std::vector<double>& wv) {
        std::vector<double> y(B * To * Cout);
        kernels::conv1d(xv.data(), wv.data(), nullptr, y.data(), B, T, Cin, Cout, K, stride, pad);
        double acc = 0.0;
        for (size_t i = 0; i < y.size(); ++i) acc += y[i] * dy[i];
        return acc;
    };

    std::vector<double> dx(B * T * Cin), dw(K * Cin * Cout);
    kernels::conv1d_dx(dy.data(), w.data(), dx.data(), B, T, Cin, Cout, K, stride, pad);
    kernels::conv1d_dw(x.data(), dy.data(), dw.data(), B, T, Cin, Cout, K, stride, pad);

    const double h = 1e-6;
    for (size_t i = 0; i < dx.size(); i += 7) {
        auto xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        const double fd = (loss(xp, w) - loss(xm, w)) / (2 * h);
        CHECK(dx[i] == doctest::Approx(fd).epsilon(1e-5));
    }
    for (size_t i = 0; i < dw.size(); i += 5) {
        auto wp = w, wm = w;
        wp[i] += h;
        wm[i] -= h;
        const double fd = (loss(x, wp) - loss(x, wm)) / (2 * h);
        CHECK(dw[i] == doctest::Approx(fd).epsilon(1e-5));
    }
}

TEST_CASE("gelu and softmax match serial references bitwise") {
    const auto x = random_vec(257, 18);
    std::vector<double> y1(x.size()), y2(x.size());
    kernels::gelu(x.data(), y1.data(), x.size());
    kernels::serial::gelu(x.data(), y2.data(), x.size());
    CHECK(bitwise_equal(y1, y2));

    const int64_t rows = 11, n = 13;
    const auto s = random_vec(rows * n, 19);
    std::vector<double> p1(rows * n), p2(rows * n);
    kernels::softmax_rows(s.data(), p1.data(), rows, n, nullptr);
    kernels::serial::softmax_rows(s.data(), p2.data(), rows, n, nullptr);
    CHECK(bitwise_equal(p1, p2));
}

TEST_CASE("softmax rows sum to one and honor valid lengths") {
    const int64_t rows = 5, n = 8;
    const auto s = random_vec(rows * n, 20);
    std::vector<int64_t> valid{8, 1, 3, 5, 8};
    std::vector<double> p(rows * n);
    kernels::softmax_rows(s.data(), p.data(), rows, n, valid.data());
    for (int64_t r = 0; r < rows; ++r) {
        double sum = 0.0;
        for (int64_t i = 0; i < n; ++i) {
            sum += p[r * n + i];
            if (i >= valid[r]) CHECK(p[r * n + i] == 0.0);
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("softmax backward matches finite differences") {
    const int64_t rows = 3, n = 6;
    const auto x = random_vec(rows * n, 21);
    const auto dy = random_vec(rows * n, 22);
    std::vector<double> p(rows * n), dx(rows * n);
    kernels::softmax_rows(x.data(), p.data(), rows, n, nullptr);
    kernels::softmax_rows_dx(p.data(), dy.data(), dx.data(), rows, n);
    const double h = 1e-6;
    for (int64_t i = 0; i < rows * n; ++i) {
        auto xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        std::vector<double> pp(rows * n), pm(rows * n);
        kernels::softmax_rows(xp.data(), pp.data(), rows, n, nullptr);
        kernels::softmax_rows(xm.data(), pm.data(), rows, n, nullptr);
        double fd = 0.0;
        for (int64_t j = 0; j < rows * n; ++j) fd += (pp[j] - pm[j]) * dy[j];
        fd /= 2 * h;
        CHECK(dx[i] == doctest::Approx(fd).epsilon(1e-4));
    }
}

TEST_CASE("fft matches the naive DFT oracle") {
    for (int64_t n : {int64_t{2}, int64_t{8}, int64_t{64}, int64_t{256}}) {
        Rng rng(23 + n);
        IqBuffer x(n);
        for (auto& v : x) v = rng.cgaussian();
        IqBuffer got = kernels::fft(x);
        IqBuffer want(n);
        kernels::serial::dft(x.data(), want.data(), n, false);
        for (int64_t i = 0; i < n; ++i) {
            CHECK(std::abs(got[i] - want[i]) < 1e-9 * std::sqrt(static_cast<double>(n)));
        }
    }
}

TEST_CASE("fft round trip and batch consistency") {
    const int64_t n = 128, batch = 9;
    Rng rng(31);
    IqBuffer x(batch * n);
    for (auto& v : x) v = rng.cgaussian();

    IqBuffer y = x;
    kernels::fft_batch(y.data(), batch, n, false);
    IqBuffer y_serial = x;
    kernels::serial::fft_batch(y_serial.data(), batch, n, false);
    for (size_t i = 0; i < y.size(); ++i) CHECK(y[i] == y_serial[i]);

    kernels::fft_batch(y.data(), batch, n, true);
    for (size_t i = 0; i < y.size(); ++i) {
        CHECK(std::abs(y[i] / static_cast<double>(n) - x[i]) < 1e-12);
    }
}

TEST_CASE("fft rejects non-power-of-two lengths") {
    IqBuffer x(12);
    CHECK_THROWS_AS(kernels::fft_inplace(x.data(), 12, false), std::invalid_argument);
}
