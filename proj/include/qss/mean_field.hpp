#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "qss/axis.hpp"

namespace qss {

/// Mean-field potential energy sampled on a regular position lattice and
/// evaluated by multilinear interpolation. Positions outside the lattice
/// are rejected rather than extrapolated.
class MeanFieldPotential {
public:
    MeanFieldPotential() = default;
    MeanFieldPotential(std::vector<NodeAxis> axes, std::vector<double> values);

    /// Zero potential on the given lattice.
    static MeanFieldPotential zero(std::vector<NodeAxis> axes);

    std::size_t dim() const { return axes_.size(); }
    const std::vector<NodeAxis>& axes() const { return axes_; }
    const std::vector<double>& values() const { return values_; }
    std::vector<double>& values() { return values_; }
    std::size_t node_count() const { return values_.size(); }

    /// Position of a flat node index.
    std::vector<double> node_position(std::size_t flat) const;

    double evaluate(std::span<const double> q) const;
    bool contains(std::span<const double> q) const;

    double min_value() const;

    bool same_lattice(const MeanFieldPotential& other) const { return axes_ == other.axes_; }

    /// Pointwise average of potentials sharing one lattice.
    static MeanFieldPotential average(std::span<const MeanFieldPotential> fields);

private:
    std::vector<NodeAxis> axes_;
    std::vector<double> values_;
};

}  // namespace qss
