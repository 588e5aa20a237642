#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <vector>

namespace loraflow {

using cplx = std::complex<double>;

/// Complex baseband signal, one (I,Q) pair per sample.
using IqBuffer = std::vector<cplx>;

inline bool all_finite(const IqBuffer& x) {
    for (const cplx& s : x) {
        if (!std::isfinite(s.real()) || !std::isfinite(s.imag())) return false;
    }
    return true;
}

/// Mean of |x[n]|^2 over the buffer.
inline double mean_power(const IqBuffer& x) {
    if (x.empty()) return 0.0;
    double acc = 0.0;
    for (const cplx& s : x) acc += std::norm(s);
    return acc / static_cast<double>(x.size());
}

inline double energy(const IqBuffer& x) {
    double acc = 0.0;
    for (const cplx& s : x) acc += std::norm(s);
    return acc;
}

}  // namespace loraflow
