#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "qss/axis.hpp"
#include "qss/mean_field.hpp"
#include "qss/model.hpp"

namespace qss {

/// Uniform histogram grid over (Q, P) space. Axes are ordered
/// q_0 .. q_{d-1}, p_0 .. p_{d-1}; bins are flattened row-major in that order.
class MuGrid {
public:
    MuGrid() = default;
    MuGrid(std::vector<UniformAxis> q_axes, std::vector<UniformAxis> p_axes);

    /// Grid with per-bin volume omega, bin aspect dq/dp = aspect in every
    /// dimension, covering at least [-q_half, q_half]^d x [-p_half, p_half]^d.
    static MuGrid with_omega(std::size_t dim, double omega, double aspect, double q_half, double p_half);

    std::size_t dim() const { return q_.size(); }
    const std::vector<UniformAxis>& q_axes() const { return q_; }
    const std::vector<UniformAxis>& p_axes() const { return p_; }
    std::vector<double> q_edges(std::size_t d) const { return q_.at(d).edges(); }
    std::vector<double> p_edges(std::size_t d) const { return p_.at(d).edges(); }

    double omega() const { return omega_; }
    std::size_t bin_count() const { return count_; }
    std::size_t q_bin_count() const;

    /// Flat bin of a phase-space point, or nullopt outside the grid.
    std::optional<std::size_t> locate(std::span<const double> q, std::span<const double> p) const;
    /// Per-axis indices of a flat bin (length 2d).
    std::vector<std::size_t> unflatten(std::size_t flat) const;
    /// Bin centre (q then p, length 2d).
    std::vector<double> center(std::size_t flat) const;
    /// Flat index over q-space alone for a flat phase-space bin.
    std::size_t q_flat(std::size_t flat) const;

    bool operator==(const MuGrid& o) const { return q_ == o.q_ && p_ == o.p_; }

private:
    std::vector<UniformAxis> q_, p_;
    double omega_ = 0.0;
    std::size_t count_ = 0;
};

/// Default grid: omega = factor / eta0 with bin aspect matching the waterbag
/// aspect position_extent / (M velocity_extent).
MuGrid default_grid(std::size_t dim, double eta0, double omega_factor, double position_extent,
                    double momentum_extent, double q_half, double p_half);

/// Coarse-grained mu-space density: mass per phase-space volume in each bin.
struct CoarseGrainedDistribution {
    MuGrid grid;
    std::vector<double> f;
    std::vector<std::uint64_t> counts;
    double t = 0.0;
    double particle_mass = 1.0;
    double total_mass = 0.0;
    double out_of_grid_mass = 0.0;

    double max_f() const;
    /// Smallest non-zero bin count (0 for an empty distribution).
    std::uint64_t min_occupied_count() const;
    std::size_t occupied_bins() const;
};

/// Histograms an ensemble. Particles outside the grid are tallied in
/// out_of_grid_mass; more than 1% of the mass outside raises OutOfGrid.
CoarseGrainedDistribution coarse_grain(const CanonicalState& state, const MuGrid& grid, SolitonMass M,
                                       double t_override = std::numeric_limits<double>::quiet_NaN());

/// Phi_MF on the position nodes at every q-bin edge and centre.
///
/// Bin mass is counted in condensates (mass / M), so Phi_MF is the potential
/// energy of one condensate in the field of the rest. In one dimension the
/// sheet and cosine kernels are integrated exactly over the uniform density
/// inside each q-bin; otherwise a bin's mass acts from its centre.
MeanFieldPotential mean_field_potential(const CoarseGrainedDistribution& dist, const PairPotential& pot);

/// Node lattice used by mean_field_potential for a grid.
std::vector<NodeAxis> mean_field_nodes(const MuGrid& grid);

struct EnergyShell {
    double epsilon = 0.0;
    /// Mean f over mu-bins in the shell; NaN when the shell is empty.
    double f_mean = 0.0;
    double shell_volume = 0.0;
    std::size_t n_bins = 0;

    bool missing() const { return n_bins == 0; }
};

struct EnergyTable {
    std::vector<EnergyShell> rows;
    double lo = 0.0;
    double width = 0.0;
};

struct EnergyRange {
    double lo = 0.0;
    double hi = 0.0;
};

/// Averages f over shells of constant one-condensate energy, evaluated at bin
/// centres. Without an explicit range the shells span from the lowest bin
/// energy to just above the highest occupied-bin energy.
EnergyTable energy_marginal(const CoarseGrainedDistribution& dist, const MeanFieldPotential& mf, SolitonMass M,
                            std::size_t n_energy_bins, std::optional<EnergyRange> range = std::nullopt);

/// sum |f_a - f_b| omega / mean total mass; throws GridMismatch for different grids.
double stationarity_metric(const CoarseGrainedDistribution& a, const CoarseGrainedDistribution& b);

/// Sliding-window stationarity test over snapshots fed in time order.
class QssDetector {
public:
    explicit QssDetector(double threshold = 0.02, std::size_t window = 5);

    /// Adds a snapshot; returns true if the current window is stationary.
    bool push(CoarseGrainedDistribution dist);

    bool window_full() const { return window_.size() == size_; }
    /// Largest pairwise metric of the current window (NaN before the window fills).
    double current_max() const { return current_max_; }
    /// Consecutive stationary windows ending at the latest snapshot.
    std::size_t consecutive() const { return consecutive_; }
    /// Time of the last snapshot of the first stationary window, if any.
    std::optional<double> first_converged_time() const { return first_time_; }
    /// (time of latest snapshot, max pairwise metric) for every full window.
    const std::vector<std::pair<double, double>>& history() const { return history_; }
    double threshold() const { return threshold_; }

    /// Reinstates bookkeeping saved from an earlier detector after the last
    /// window of snapshots has been pushed again (checkpoint resume).
    void restore(std::vector<std::pair<double, double>> history, std::size_t consecutive,
                 std::optional<double> first_time);

private:
    double threshold_;
    std::size_t size_;
    std::deque<CoarseGrainedDistribution> window_;
    double current_max_;
    std::size_t consecutive_ = 0;
    std::optional<double> first_time_;
    std::vector<std::pair<double, double>> history_;
};

/// eta0 + 3 eta0 / sqrt(min occupied count): the incompressibility ceiling
/// allowing for shot noise in the sparsest occupied bin.
double casimir_bound(double eta0, std::uint64_t min_occupied_count);

/// eta0 (1 + 3 / sqrt(eta0 omega / M)): three standard deviations of shot
/// noise for a bin uniformly filled at the fine-grained density.
double casimir_bound_expected(double eta0, double omega, SolitonMass M);

}  // namespace qss
