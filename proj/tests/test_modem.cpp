#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "loraflow/modem.hpp"
#include "loraflow/rng.hpp"

using namespace loraflow;

TEST_CASE("params derive symbol length, duration and chirp rate") {
    LoRaParams p{7, 125000.0, ChirpDirection::Up};
    CHECK(p.symbol_len() == 128);
    CHECK(p.symbol_duration() == doctest::Approx(1.024e-3).epsilon(1e-12));
    CHECK(p.chirp_rate() == doctest::Approx(125000.0 * 125000.0 / 128.0));
}

TEST_CASE("params validation rejects bad sf and bw") {
    CHECK_THROWS_AS((LoRaParams{4, 125000.0, ChirpDirection::Up}.validate()),
                    std::invalid_argument);
    CHECK_THROWS_AS((LoRaParams{13, 125000.0, ChirpDirection::Up}.validate()),
                    std::invalid_argument);
    CHECK_THROWS_AS((LoRaParams{7, 0.0, ChirpDirection::Up}.validate()),
                    std::invalid_argument);
}

TEST_CASE("base chirp has unit modulus and the expected first sample") {
    for (int sf = 5; sf <= 12; ++sf) {
        for (auto dir : {ChirpDirection::Up, ChirpDirection::Down}) {
            LoRaParams p{sf, 125000.0, dir};
            const IqBuffer s = base_chirp(p);
            REQUIRE(static_cast<int64_t>(s.size()) == p.symbol_len());
            double worst = 0.0;
            for (const cplx& v : s) worst = std::max(worst, std::abs(std::abs(v) - 1.0));
            CHECK(worst < 1e-12);
        }
    }
    // at t = -T/2 the phase is 2*pi * 2^(sf-1) * 0.75, a whole number of turns
    LoRaParams p{7, 125000.0, ChirpDirection::Up};
    const IqBuffer s = base_chirp(p);
    CHECK(s[0].real() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s[0].imag() == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("down chirp is the conjugate of the up chirp") {
    LoRaParams up{6, 125000.0, ChirpDirection::Up};
    LoRaParams dn{6, 125000.0, ChirpDirection::Down};
    const IqBuffer a = base_chirp(up), b = base_chirp(dn);
    for (size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - std::conj(b[i])) < 1e-12);
}

TEST_CASE("modulate_symbol is a cyclic shift and m=0 is the base chirp") {
    LoRaParams p{7, 125000.0, ChirpDirection::Up};
    const IqBuffer base = base_chirp(p);
    const IqBuffer m0 = modulate_symbol(p, 0);
    for (size_t i = 0; i < base.size(); ++i) CHECK(m0[i] == base[i]);

    const IqBuffer m37 = modulate_symbol(p, 37);
    for (size_t i = 0; i < base.size(); ++i) CHECK(m37[i] == base[(i + 37) % base.size()]);

    CHECK_THROWS_AS(modulate_symbol(p, p.symbol_len()), std::invalid_argument);
    CHECK_THROWS_AS(modulate_symbol(p, -1), std::invalid_argument);
}

TEST_CASE("noiseless round trip for every symbol, both directions, sf 5..10") {
    for (int sf = 5; sf <= 10; ++sf) {
        for (auto dir : {ChirpDirection::Up, ChirpDirection::Down}) {
            LoRaParams p{sf, 125000.0, dir};
            const int64_t n = p.symbol_len();
            for (int64_t m = 0; m < n; ++m) {
                const DemodResult r = dechirp_demod(p, modulate_symbol(p, m));
                REQUIRE(r.symbol == m);
                REQUIRE(r.peak_magnitude ==
                        doctest::Approx(static_cast<double>(n)).epsilon(1e-9));
            }
        }
    }
}

TEST_CASE("dechirp demod SF7 m=37 noiseless") {
    LoRaParams p{7, 125000.0, ChirpDirection::Up};
    CHECK(dechirp_demod(p, modulate_symbol(p, 37)).symbol == 37);
    CHECK(correlation_oracle_demod(p, modulate_symbol(p, 37)) == 37);
}

TEST_CASE("dechirp demod rejects wrong lengths") {
    LoRaParams p{7, 125000.0, ChirpDirection::Up};
    IqBuffer bad(64, cplx(1.0, 0.0));
    CHECK_THROWS_AS(dechirp_demod(p, bad), std::invalid_argument);
    CHECK_THROWS_AS(correlation_oracle_demod(p, bad), std::invalid_argument);
}

TEST_CASE("awgn: infinite snr flag, determinism, empirical power") {
    LoRaParams p{7, 125000.0, ChirpDirection::Up};
    const IqBuffer s = modulate_symbol(p, 5);

    const IqBuffer clean = add_awgn(s, std::numeric_limits<double>::infinity(), 1);
    for (size_t i = 0; i < s.size(); ++i) CHECK(clean[i] == s[i]);

    const IqBuffer a = add_awgn(s, -10.0, 42);
    const IqBuffer b = add_awgn(s, -10.0, 42);
    for (size_t i = 0; i < s.size(); ++i) CHECK(a[i] == b[i]);
    const IqBuffer c = add_awgn(s, -10.0, 43);
    bool any_diff = false;
    for (size_t i = 0; i < s.size(); ++i) any_diff |= (a[i] != c[i]);
    CHECK(any_diff);

    // 0 dB: noise power over signal power within 5% at n = 2^14
    const int64_t n = 1 << 14;
    IqBuffer ones(n, cplx(1.0, 0.0));
    const IqBuffer noisy = add_awgn(ones, 0.0, 7);
    double noise_power = 0.0;
    for (int64_t i = 0; i < n; ++i) noise_power += std::norm(noisy[i] - ones[i]);
    noise_power /= static_cast<double>(n);
    CHECK(noise_power == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("pure noise demodulates to a uniform-ish symbol distribution") {
    LoRaParams p{7, 125000.0, ChirpDirection::Up};
    const int64_t trials = 10000;
    const int64_t n = p.symbol_len();
    Rng rng(99);
    int64_t hits = 0;
    std::vector<int64_t> counts(n, 0);
    for (int64_t i = 0; i < trials; ++i) {
        Rng trial = rng.child(i);
        IqBuffer noise(n);
        for (auto& v : noise) v = trial.cgaussian();
        const int64_t m = dechirp_demod(p, noise).symbol;
        ++counts[m];
        hits += (m == 17) ? 1 : 0;  // arbitrary fixed symbol
    }
    const double chance = 1.0 / static_cast<double>(n);
    const double sigma = std::sqrt(chance * (1 - chance) * trials);
    CHECK(std::abs(static_cast<double>(hits) - chance * trials) < 3 * sigma);
    // every symbol should occur at least once in 1e4 trials (E[count] ~ 78)
    for (int64_t k = 0; k < n; ++k) CHECK(counts[k] > 0);
}

TEST_CASE("baseline waterfall: SF7 at -5 dB decodes m=42 with high probability") {
    LoRaParams p{7, 125000.0, ChirpDirection::Up};
    const IqBuffer s = modulate_symbol(p, 42);
    const int64_t trials = 10000;
    int64_t correct = 0;
    for (int64_t i = 0; i < trials; ++i) {
        const IqBuffer noisy = add_awgn(s, -5.0, derive_seed(1234, i));
        correct += (dechirp_demod(p, noisy).symbol == 42) ? 1 : 0;
    }
    CHECK(static_cast<double>(correct) / trials > 0.999);
}

TEST_CASE("oracle equivalence across SNRs") {
    LoRaParams p{7, 125000.0, ChirpDirection::Up};
    const int64_t per_snr = 1000;
    for (double snr : {-30.0, -20.0, -10.0, 0.0}) {
        int64_t agree = 0;
        for (int64_t i = 0; i < per_snr; ++i) {
            Rng rng(derive_seed(555, static_cast<uint64_t>(snr * -10), i));
            const int64_t m = rng.uniform_int(0, p.symbol_len() - 1);
            const IqBuffer noisy =
                add_awgn(modulate_symbol(p, m), snr, rng.next_u64());
            const int64_t a = dechirp_demod(p, noisy).symbol;
            const int64_t b = correlation_oracle_demod(p, noisy);
            agree += (a == b) ? 1 : 0;
        }
        CHECK(static_cast<double>(agree) / per_snr >= 0.999);
    }
}

TEST_CASE("oracle demod tie-break on the zero signal") {
    LoRaParams p{5, 125000.0, ChirpDirection::Up};
    IqBuffer zero(p.symbol_len(), cplx(0.0, 0.0));
    CHECK(correlation_oracle_demod(p, zero) == 0);
    CHECK(dechirp_demod(p, zero).symbol == 0);
}

TEST_CASE("symbol error rate") {
    std::vector<int64_t> a{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    std::vector<int64_t> b = a;
    CHECK(symbol_error_rate(a, b) == 0.0);
    for (auto& v : b) v += 1;
    CHECK(symbol_error_rate(a, b) == 1.0);
    b = a;
    for (int i = 0; i < 5; ++i) b[i] += 1;
    CHECK(symbol_error_rate(a, b) == 0.5);
    std::vector<int64_t> shorter{1, 2};
    CHECK_THROWS_AS(symbol_error_rate(a, shorter), std::invalid_argument);
}

TEST_CASE("ser is non-increasing in snr (monte carlo)") {
    LoRaParams p{7, 125000.0, ChirpDirection::Up};
    const int64_t trials = 2000;
    std::vector<double> snrs{-25.0, -20.0, -15.0, -10.0, -5.0};
    std::vector<double> sers;
    for (double snr : snrs) {
        int64_t errors = 0;
        for (int64_t i = 0; i < trials; ++i) {
            Rng rng(derive_seed(777, static_cast<uint64_t>(-snr * 4), i));
            const int64_t m = rng.uniform_int(0, p.symbol_len() - 1);
            const IqBuffer noisy = add_awgn(modulate_symbol(p, m), snr, rng.next_u64());
            errors += (dechirp_demod(p, noisy).symbol != m) ? 1 : 0;
        }
        sers.push_back(static_cast<double>(errors) / trials);
    }
    const double slack = 3.0 / std::sqrt(static_cast<double>(trials));
    for (size_t i = 1; i < sers.size(); ++i) CHECK(sers[i] <= sers[i - 1] + slack);
}
