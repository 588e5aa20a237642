#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "loraflow/model.hpp"
#include "loraflow/modem.hpp"
#include "loraflow/rng.hpp"

using namespace loraflow;

namespace {

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.width = 8;
    cfg.depth = 1;
    cfg.heads = 2;
    cfg.fourier_dim = 4;
    cfg.sf_max = 5;
    return cfg;
}

IqBuffer random_iq(int64_t n, uint64_t seed) {
    Rng rng(seed);
    IqBuffer x(n);
    for (auto& v : x) v = rng.cgaussian();
    return x;
}

}  // namespace

TEST_CASE("config validation") {
    ModelConfig bad = tiny_config();
    bad.width = 9;  // not divisible by heads
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = tiny_config();
    bad.width = 10;  // divisible, but head_dim = 5 is odd
    bad.heads = 2;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = tiny_config();
    bad.downsample_factor = 4;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = tiny_config();
    bad.cond_dim = 4;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("velocity output shape matches input for sf 5..10") {
    ModelConfig cfg = tiny_config();
    cfg.sf_max = 10;
    ParamStore store;
    init_params(cfg, store, 1);
    for (int sf = 5; sf <= 10; ++sf) {
        const int64_t n = int64_t{1} << sf;
        const IqBuffer x = random_iq(n, 10 + sf);
        const ModelOutput out = forward(cfg, store, x, 0.4, CondVector::zeros(), false);
        CHECK(static_cast<int64_t>(out.velocity.size()) == n);
        CHECK(out.logits.empty());
    }
}

TEST_CASE("train mode produces logits of size 2^sf_max") {
    ModelConfig cfg = tiny_config();
    ParamStore store;
    init_params(cfg, store, 2);
    const IqBuffer x = random_iq(32, 3);
    const ModelOutput out = forward(cfg, store, x, 0.3, CondVector::zeros(), true);
    CHECK(static_cast<int64_t>(out.logits.size()) == cfg.classes());
    for (double v : out.logits) CHECK(std::isfinite(v));
}

TEST_CASE("forward is deterministic") {
    ModelConfig cfg = tiny_config();
    ParamStore store;
    init_params(cfg, store, 4);
    const IqBuffer x = random_iq(32, 5);
    CondVector c;
    c.c = {1, -1, 1, -1, -1, -1, -1, 0.5};
    const ModelOutput a = forward(cfg, store, x, 0.7, c, true);
    const ModelOutput b = forward(cfg, store, x, 0.7, c, true);
    for (size_t i = 0; i < a.velocity.size(); ++i) CHECK(a.velocity[i] == b.velocity[i]);
    for (size_t i = 0; i < a.logits.size(); ++i) CHECK(a.logits[i] == b.logits[i]);
}

TEST_CASE("inference path never touches classifier parameters") {
    ModelConfig cfg = tiny_config();
    ParamStore full, stripped;
    init_params(cfg, full, 6);
    init_params(cfg, stripped, 6);
    stripped.erase("cls.fc1.w");
    stripped.erase("cls.fc1.b");
    stripped.erase("cls.fc2.w");
    stripped.erase("cls.fc2.b");
    const IqBuffer x = random_iq(32, 7);
    const ModelOutput a = forward(cfg, full, x, 0.25, CondVector::zeros(), false);
    const ModelOutput b = forward(cfg, stripped, x, 0.25, CondVector::zeros(), false);
    for (size_t i = 0; i < a.velocity.size(); ++i) CHECK(a.velocity[i] == b.velocity[i]);
    // and train mode on the stripped store fails loudly
    CHECK_THROWS_AS(forward(cfg, stripped, x, 0.25, CondVector::zeros(), true),
                    std::invalid_argument);
}

TEST_CASE("mapping network: determinism, unit RMS, condition sensitivity") {
    ModelConfig cfg = tiny_config();
    ParamStore store;
    init_params(cfg, store, 8);
    CondVector flags;
    flags.c = {1, 1, -1, -1, -1, -1, -1, 0.0};

    const auto a = mapping_network(0.37, flags, cfg, store);
    const auto b = mapping_network(0.37, flags, cfg, store);
    REQUIRE(a.size() == static_cast<size_t>(cfg.width));
    for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);

    double ms = 0.0;
    for (double v : a) ms += v * v;
    const double rms = std::sqrt(ms / static_cast<double>(a.size()));
    CHECK(rms == doctest::Approx(1.0).epsilon(1e-5));

    const auto z = mapping_network(0.37, CondVector::zeros(), cfg, store);
    double diff = 0.0;
    for (size_t i = 0; i < a.size(); ++i) diff += std::abs(a[i] - z[i]);
    CHECK(diff > 1e-6);
}

TEST_CASE("zero-initialized modulation makes conditioning a no-op at init") {
    // AdaRMSNorm modulation starts at zero, so at init the velocity cannot
    // depend on the condition vector (it only enters through modulations).
    ModelConfig cfg = tiny_config();
    ParamStore store;
    init_params(cfg, store, 9);
    const IqBuffer x = random_iq(32, 10);
    CondVector c1;
    c1.c = {1, 1, 1, 1, 1, 1, 1, 1};
    const ModelOutput a = forward(cfg, store, x, 0.5, CondVector::zeros(), false);
    const ModelOutput b = forward(cfg, store, x, 0.5, c1, false);
    for (size_t i = 0; i < a.velocity.size(); ++i) CHECK(a.velocity[i] == b.velocity[i]);

    // perturbing a modulation weight breaks the invariance
    store.value("blk0.attn.norm.mod.w").data[3] = 0.5;
    const ModelOutput d = forward(cfg, store, x, 0.5, c1, false);
    double diff = 0.0;
    for (size_t i = 0; i < a.velocity.size(); ++i) diff += std::abs(a.velocity[i] - d.velocity[i]);
    CHECK(diff > 1e-9);
}

TEST_CASE("network output is not invariant to cyclic input shifts") {
    ModelConfig cfg = tiny_config();
    ParamStore store;
    init_params(cfg, store, 11);
    const IqBuffer x = random_iq(32, 12);
    IqBuffer rolled(x.size());
    for (size_t i = 0; i < x.size(); ++i) rolled[i] = x[(i + 4) % x.size()];
    const ModelOutput a = forward(cfg, store, x, 0.5, CondVector::zeros(), false);
    const ModelOutput b = forward(cfg, store, rolled, 0.5, CondVector::zeros(), false);
    // compare b against a rolled by the same amount; equality would mean the
    // network is blind to absolute position
    double diff = 0.0;
    for (size_t i = 0; i < a.velocity.size(); ++i)
        diff += std::abs(b.velocity[i] - a.velocity[(i + 4) % a.velocity.size()]);
    CHECK(diff > 1e-9);
}

TEST_CASE("forward rejects bad inputs") {
    ModelConfig cfg = tiny_config();
    ParamStore store;
    init_params(cfg, store, 13);
    CHECK_THROWS_AS(forward(cfg, store, random_iq(33, 14), 0.5, CondVector::zeros(), false),
                    std::invalid_argument);
    IqBuffer bad = random_iq(32, 15);
    bad[3] = cplx(std::numeric_limits<double>::quiet_NaN(), 0.0);
    CHECK_THROWS_AS(forward(cfg, store, bad, 0.5, CondVector::zeros(), false),
                    std::domain_error);
}

TEST_CASE("full-model gradient check on a tiny model") {
    ModelConfig cfg = tiny_config();
    ParamStore store;
    init_params(cfg, store, 16);
    const IqBuffer xin = random_iq(32, 17);
    const Tensor x = iq_to_tensor(xin);
    Tensor target({1, 32, 2});
    Rng rng(18);
    for (double& v : target.data) v = rng.gaussian();

    auto build = [&](Tape& tp, ParamStore& st) {
        const ForwardIds ids = forward_batch(tp, cfg, st, x, {0.42}, {CondVector::zeros()}, true);
        Tape::Id l1 = tp.mse_vs(ids.velocity, target);
        Tape::Id l2 = tp.ce_zloss(ids.logits, {7}, 1e-4);
        return tp.add(l1, tp.scale(l2, 0.05));
    };

    store.zero_grads();
    Tape tp(true);
    tp.backward(build(tp, store));

    Rng pick(19);
    int checked = 0;
    std::vector<std::string> names;
    for (const auto& [name, e] : store.entries()) names.push_back(name);
    while (checked < 30) {
        const std::string& name = names[pick.uniform_int(0, names.size() - 1)];
        auto& e = store.entry(name);
        const int64_t i = pick.uniform_int(0, e.value.numel() - 1);
        const double orig = e.value.data[i];
        const double h = 1e-4;
        e.value.data[i] = orig + h;
        Tape tp1(false);
        const double lp = tp1.scalar(build(tp1, store));
        e.value.data[i] = orig - h;
        Tape tp2(false);
        const double lm = tp2.scalar(build(tp2, store));
        e.value.data[i] = orig;
        const double fd = (lp - lm) / (2 * h);
        const double got = e.grad.data[i];
        if (std::abs(fd) < 1e-9 && std::abs(got) < 1e-9) continue;  // both ~0
        const double err = std::abs(got - fd) / std::max({1e-8, std::abs(got), std::abs(fd)});
        INFO("param ", name, "[", i, "] analytic ", got, " fd ", fd);
        CHECK(err < 1e-4);
        ++checked;
    }
}
