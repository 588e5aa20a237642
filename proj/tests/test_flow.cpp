#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "loraflow/flow.hpp"
#include "loraflow/modem.hpp"
#include "loraflow/rng.hpp"

using namespace loraflow;

TEST_CASE("snr_to_t known values") {
    CHECK(snr_to_t(0.0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(snr_to_t(-20.0) == doctest::Approx(0.1 / 1.1).epsilon(1e-12));
    CHECK(snr_to_t(-40.0) == doctest::Approx(0.01 / 1.01).epsilon(1e-12));
}

TEST_CASE("snr_to_t is strictly increasing with positive derivative") {
    double prev = snr_to_t(-80.0);
    for (double db = -79.5; db <= 80.0; db += 0.5) {
        const double cur = snr_to_t(db);
        CHECK(cur > prev);
        const double deriv = (snr_to_t(db + 1e-4) - snr_to_t(db - 1e-4)) / 2e-4;
        CHECK(deriv > 0.0);
        prev = cur;
    }
    CHECK(snr_to_t(-200.0) > 0.0);
    CHECK(snr_to_t(200.0) < 1.0);
}

TEST_CASE("t_to_snr_db inverts snr_to_t") {
    CHECK(t_to_snr_db(0.5) == doctest::Approx(0.0).epsilon(1e-12));
    Rng rng(5);
    for (int i = 0; i < 100; ++i) {
        const double t = rng.uniform(0.01, 0.99);
        CHECK(snr_to_t(t_to_snr_db(t)) == doctest::Approx(t).epsilon(1e-9));
    }
    CHECK_THROWS_AS(t_to_snr_db(0.0), std::invalid_argument);
    CHECK_THROWS_AS(t_to_snr_db(1.0), std::invalid_argument);
    // t -> 1 clamps at the configured max dB
    CHECK(t_to_snr_db(std::nextafter(1.0, 0.0)) == kMaxAbsSnrDb);
}

namespace {

FlowEndpoints make_endpoints(int64_t n, uint64_t seed) {
    LoRaParams p{7, 125000.0, ChirpDirection::Up};
    FlowEndpoints e;
    e.z1 = modulate_symbol(p, 19);
    e.z1.resize(n, cplx(1.0, 0.0));
    Rng rng(seed);
    e.z0.resize(n);
    for (auto& v : e.z0) v = rng.cgaussian();
    return e;
}

}  // namespace

TEST_CASE("interpolate endpoints") {
    const FlowEndpoints e = make_endpoints(128, 11);
    const IqBuffer x0 = interpolate(e, 0.0);
    const IqBuffer x1 = interpolate(e, 1.0);
    for (size_t i = 0; i < x0.size(); ++i) {
        CHECK(x0[i] == e.z0[i]);
        CHECK(x1[i] == e.z1[i]);
    }
    FlowEndpoints bad = e;
    bad.z0.pop_back();
    CHECK_THROWS_AS(interpolate(bad, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(interpolate(e, 1.5), std::invalid_argument);
}

TEST_CASE("midpoint of the path measures about 0 dB") {
    // along x_t = t z1 + (1-t) z0 the signal:noise power ratio is
    // (t/(1-t))^2, i.e. exactly t_to_snr_db(t)
    const int64_t n = 1 << 14;
    FlowEndpoints e;
    e.z1.assign(n, cplx(1.0, 0.0));
    Rng rng(21);
    e.z0.resize(n);
    for (auto& v : e.z0) v = rng.cgaussian();
    for (double t : {0.5, 0.3, 0.7}) {
        const IqBuffer xt = interpolate(e, t);
        double signal_power = t * t;
        double noise_power = 0.0;
        for (int64_t i = 0; i < n; ++i) noise_power += std::norm(xt[i] - t * e.z1[i]);
        noise_power /= static_cast<double>(n);
        const double measured_db = 10.0 * std::log10(signal_power / noise_power);
        CHECK(measured_db == doctest::Approx(t_to_snr_db(t)).epsilon(0.12));
    }
}

TEST_CASE("velocity target basics and the straight-line identity") {
    const FlowEndpoints e = make_endpoints(128, 13);
    const IqBuffer v = velocity_target(e);
    for (size_t i = 0; i < v.size(); ++i) CHECK(v[i] == e.z1[i] - e.z0[i]);

    FlowEndpoints same;
    same.z0 = same.z1 = e.z1;
    for (const cplx& x : velocity_target(same)) CHECK(std::abs(x) == 0.0);

    for (double t : {0.0, 0.25, 0.5, 0.9}) {
        const IqBuffer xt = interpolate(e, t);
        for (size_t i = 0; i < xt.size(); ++i) {
            const cplx z1 = xt[i] + (1.0 - t) * v[i];
            CHECK(std::abs(z1 - e.z1[i]) < 1e-12);
        }
    }
}

TEST_CASE("insertion identity: t(s+n) = t s + (1-t) n/sigma") {
    LoRaParams p{7, 125000.0, ChirpDirection::Up};
    Rng rng(31);
    for (int trial = 0; trial < 100; ++trial) {
        const double snr_db = rng.uniform(-40.0, 0.0);
        const double sigma = std::pow(10.0, -snr_db / 20.0);
        const int64_t m = rng.uniform_int(0, p.symbol_len() - 1);
        const IqBuffer s = modulate_symbol(p, m);
        IqBuffer noise(s.size());
        for (auto& v : noise) v = sigma * rng.cgaussian();
        IqBuffer received(s.size());
        for (size_t i = 0; i < s.size(); ++i) received[i] = s[i] + noise[i];

        const FlowState st = insert_received(received, snr_db);
        const double t = st.t;
        for (size_t i = 0; i < s.size(); ++i) {
            const cplx alt = t * s[i] + (1.0 - t) * (noise[i] / sigma);
            CHECK(std::abs(st.x[i] - alt) < 1e-12);
        }
    }
}

TEST_CASE("insertion limits") {
    IqBuffer r(8, cplx(2.0, -1.0));
    const FlowState hi = insert_received(r, std::numeric_limits<double>::infinity());
    CHECK(hi.t > 1.0 - 1e-7);
    for (size_t i = 0; i < r.size(); ++i) CHECK(std::abs(hi.x[i] - r[i]) < 1e-6);

    const FlowState mid = insert_received(r, 0.0);
    CHECK(mid.t == doctest::Approx(0.5).epsilon(1e-15));
    for (size_t i = 0; i < r.size(); ++i) CHECK(mid.x[i] == 0.5 * r[i]);
}

TEST_CASE("euler sampling with the constant oracle field is exact") {
    const FlowEndpoints e = make_endpoints(128, 17);
    const IqBuffer vstar = velocity_target(e);
    const VelocityField field = [&](const IqBuffer&, double, const CondVector&) {
        return vstar;
    };
    for (double t0 : {0.0, 0.1, 0.5, 0.93}) {
        FlowState start{interpolate(e, t0), t0};
        for (int64_t nfe : {int64_t{1}, int64_t{2}, int64_t{16}}) {
            int64_t evals = 0;
            const IqBuffer out = euler_sample(field, start, nfe, CondVector::zeros(), &evals);
            CHECK(evals == nfe);
            double num = 0.0, den = 0.0;
            for (size_t i = 0; i < out.size(); ++i) {
                num += std::norm(out[i] - e.z1[i]);
                den += std::norm(e.z1[i]);
            }
            CHECK(std::sqrt(num / den) < 1e-6);
        }
    }
}

TEST_CASE("euler sampling rejects nfe = 0") {
    const FlowEndpoints e = make_endpoints(16, 19);
    const VelocityField field = [&](const IqBuffer&, double, const CondVector&) {
        return velocity_target(e);
    };
    FlowState start{e.z0, 0.0};
    CHECK_THROWS_AS(euler_sample(field, start, 0, CondVector::zeros()), std::invalid_argument);
}

TEST_CASE("fixed step budget: higher snr means fewer steps") {
    const double dt = 0.05;
    double prev_steps = 1e18;
    for (double snr : {-40.0, -20.0, -10.0, 0.0, 10.0}) {
        const double t = snr_to_t(snr);
        const double steps = std::ceil((1.0 - t) / dt);
        CHECK(steps <= prev_steps);
        prev_steps = steps;
    }
}
