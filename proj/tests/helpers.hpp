#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "qss/model.hpp"
#include "qss/random.hpp"

namespace qss::test {

inline CanonicalState random_state(std::size_t n, std::size_t dim, double qscale, double pscale, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    CanonicalState s(dim, n);
    for (auto& x : s.q) x = qscale * (2.0 * unit_uniform(rng) - 1.0);
    for (auto& x : s.p) x = pscale * (2.0 * unit_uniform(rng) - 1.0);
    return s;
}

inline double rel_diff(double a, double b) {
    return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b)));
}

// Unordered-pair double loop written directly from the pair potential.
inline double pair_sum_oracle(const CanonicalState& s, const PairPotential& pot) {
    double u = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i)
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (i == j) continue;
            double r2 = 0.0;
            for (std::size_t d = 0; d < s.dim; ++d) {
                const double dx = s.q[i * s.dim + d] - s.q[j * s.dim + d];
                r2 += dx * dx;
            }
            u += 0.5 * pair_potential(pot, std::sqrt(r2));
        }
    return u;
}

}  // namespace qss::test
