#pragma once

#include <array>

namespace loraflow {

/// 8-entry conditioning vector: seven augmentation flags in {-1, +1} plus an
/// SF slot, or all zeros when dropped out (the evaluation path always uses
/// zeros).
struct CondVector {
    std::array<double, 8> c{};

    static CondVector zeros() { return CondVector{}; }

    bool is_zero() const {
        for (double v : c)
            if (v != 0.0) return false;
        return true;
    }
};

}  // namespace loraflow
