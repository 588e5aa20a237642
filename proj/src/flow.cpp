#include "loraflow/flow.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace loraflow {

double snr_to_t(double snr_db) {
    const double db = std::clamp(snr_db, -kMaxAbsSnrDb, kMaxAbsSnrDb);
    const double amp = std::pow(10.0, db / 20.0);  // sqrt(SNR)
    return amp / (1.0 + amp);
}

double t_to_snr_db(double t) {
    if (!(t > 0.0 && t < 1.0))
        throw std::invalid_argument("t_to_snr_db: t must be in (0,1)");
    const double db = 20.0 * std::log10(t / (1.0 - t));
    return std::clamp(db, -kMaxAbsSnrDb, kMaxAbsSnrDb);
}

IqBuffer interpolate(const FlowEndpoints& e, double t) {
    if (e.z0.size() != e.z1.size())
        throw std::invalid_argument("interpolate: endpoint shape mismatch");
    if (!(t >= 0.0 && t <= 1.0))
        throw std::invalid_argument("interpolate: t must be in [0,1]");
    IqBuffer x(e.z0.size());
    for (size_t i = 0; i < x.size(); ++i) x[i] = t * e.z1[i] + (1.0 - t) * e.z0[i];
    return x;
}

IqBuffer velocity_target(const FlowEndpoints& e) {
    if (e.z0.size() != e.z1.size())
        throw std::invalid_argument("velocity_target: endpoint shape mismatch");
    IqBuffer v(e.z0.size());
    for (size_t i = 0; i < v.size(); ++i) v[i] = e.z1[i] - e.z0[i];
    return v;
}

FlowState insert_received(const IqBuffer& received, double snr_db) {
    FlowState s;
    s.t = snr_to_t(snr_db);
    s.x.resize(received.size());
    for (size_t i = 0; i < received.size(); ++i) s.x[i] = s.t * received[i];
    return s;
}

IqBuffer euler_sample(const VelocityField& v, const FlowState& start, int64_t nfe,
                      const CondVector& cond, int64_t* eval_count) {
    if (nfe < 1)
        throw std::invalid_argument("euler_sample: nfe must be >= 1");
    if (!(start.t >= 0.0 && start.t < 1.0))
        throw std::invalid_argument("euler_sample: start.t must be in [0,1)");
    IqBuffer x = start.x;
    const double dt = (1.0 - start.t) / static_cast<double>(nfe);
    double t = start.t;
    for (int64_t step = 0; step < nfe; ++step) {
        const IqBuffer vel = v(x, t, cond);
        if (vel.size() != x.size())
            throw std::invalid_argument("euler_sample: velocity shape mismatch");
        for (size_t i = 0; i < x.size(); ++i) x[i] += dt * vel[i];
        t = start.t + dt * static_cast<double>(step + 1);
        if (eval_count) ++*eval_count;
    }
    return x;
}

}  // namespace loraflow
