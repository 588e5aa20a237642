#pragma once

#include <cstdint>
#include <functional>

#include "loraflow/condition.hpp"
#include "loraflow/iq.hpp"

namespace loraflow {

/// A point on the straight noise->data path.
struct FlowState {
    IqBuffer x;
    double t = 0.0;
};

/// z0 is pure noise (unit power per complex sample), z1 the clean signal.
struct FlowEndpoints {
    IqBuffer z0;
    IqBuffer z1;
};

/// |dB| beyond which the SNR<->t maps clamp; keeps t strictly inside (0,1).
inline constexpr double kMaxAbsSnrDb = 300.0;

/// t = sqrt(SNR) / (1 + sqrt(SNR)) with SNR = 10^(snr_db/10). Strictly
/// increasing from dB into (0,1); infinities clamp at +-kMaxAbsSnrDb.
double snr_to_t(double snr_db);

/// Inverse of snr_to_t; throws for t outside (0,1). Output clamps at
/// +-kMaxAbsSnrDb.
double t_to_snr_db(double t);

/// x_t = t z1 + (1-t) z0.
IqBuffer interpolate(const FlowEndpoints& e, double t);

/// The straight-line velocity z1 - z0, independent of t.
IqBuffer velocity_target(const FlowEndpoints& e);

/// Places a received signal (unit-power clean part plus noise at snr_db)
/// directly on the flow path: t = snr_to_t(snr_db), x_t = t * received.
FlowState insert_received(const IqBuffer& received, double snr_db);

using VelocityField =
    std::function<IqBuffer(const IqBuffer& x, double t, const CondVector& cond)>;

/// Euler integration of dx/dt = v(x, t, cond) from start.t to 1 in nfe
/// uniform steps; exactly nfe field evaluations (added to *eval_count when
/// given).
IqBuffer euler_sample(const VelocityField& v, const FlowState& start, int64_t nfe,
                      const CondVector& cond, int64_t* eval_count = nullptr);

}  // namespace loraflow
