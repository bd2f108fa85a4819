#pragma once

#include <cstdint>
#include <random>

namespace qss {

/// Uniform double in [0, 1) from the top 53 bits of one 64-bit draw.
/// Fixed here so streams are identical across standard-library vendors.
inline double unit_uniform(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace qss
