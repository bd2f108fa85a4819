#pragma once

#include <cstddef>
#include <vector>

namespace qss {

/// Uniform binning of one coordinate: `bins` cells of equal `width` starting at `lo`.
struct UniformAxis {
    double lo = 0.0;
    double width = 1.0;
    std::size_t bins = 0;

    double hi() const { return lo + width * static_cast<double>(bins); }
    double edge(std::size_t i) const { return lo + width * static_cast<double>(i); }
    double center(std::size_t i) const { return lo + width * (static_cast<double>(i) + 0.5); }

    /// Bin index of x, or -1 when x lies outside [lo, hi).
    long locate(double x) const;

    std::vector<double> edges() const;

    bool operator==(const UniformAxis&) const = default;
};

/// Regularly spaced sample points: `count` nodes at origin + k * spacing.
struct NodeAxis {
    double origin = 0.0;
    double spacing = 1.0;
    std::size_t count = 0;

    double position(std::size_t k) const { return origin + spacing * static_cast<double>(k); }
    double last() const { return position(count == 0 ? 0 : count - 1); }

    bool operator==(const NodeAxis&) const = default;
};

}  // namespace qss
