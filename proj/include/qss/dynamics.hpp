#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "qss/error.hpp"
#include "qss/model.hpp"

namespace qss {

enum class Scheme { leapfrog };

struct IntegratorConfig {
    double dt = 0.01;
    std::size_t n_steps = 1;
    Scheme scheme = Scheme::leapfrog;
    std::size_t snapshot_stride = 1;
    bool store_snapshots = true;
    /// Worker threads for the force kernel; results do not depend on it.
    std::size_t threads = 1;

    void validate() const;
};

enum class WaterbagSampling { uniform, quiet };

std::string to_string(WaterbagSampling s);
WaterbagSampling waterbag_sampling_from_string(const std::string& name);

/// Uniform patch [-a, a]^dim x [-b, b]^dim in (position, velocity).
struct WaterbagInit {
    std::size_t n_particles = 2;
    std::size_t dim = 1;
    double position_extent = 1.0;
    double velocity_extent = 1.0;
    /// When set, velocities are rescaled by one common factor so that
    /// 2K / |sum_i Q_i . F_i| equals this value.
    std::optional<double> virial_ratio_target;
    std::uint64_t seed = 42;
    /// `quiet` draws positions and velocities from a randomly shifted Halton
    /// sequence instead of independent uniforms.
    WaterbagSampling sampling = WaterbagSampling::uniform;
    /// Place particles in mirror pairs (Q, P) and (-Q, -P): zero total momentum
    /// and centre of mass by construction.
    bool symmetric = true;

    void validate() const;
};

struct Waterbag {
    CanonicalState state;
    /// Fine-grained phase-space density n M / (phase-space volume in (Q, P)).
    double eta0 = 0.0;
    double position_extent = 0.0;
    /// Velocity half-width after any virial rescaling.
    double velocity_extent = 0.0;
    double virial_ratio = 0.0;
    /// (full width 2a) / (one-component velocity dispersion).
    double dynamical_time = 0.0;
};

Waterbag init_waterbag(const WaterbagInit& cfg, SolitonMass M, const PairPotential& pot);

/// Evaluates F_C = -sum_{C' != C} grad Phi(|Q_C - Q_C'|).
///
/// One-dimensional sheets use the rank identity F_i = coupling (n_right - n_left)
/// and one-dimensional cosine systems the O(n) mean-field identity; every other
/// case is a blocked direct pair sum. Blocks are fixed in number and reduced in
/// order, so results do not depend on the thread count.
class ForceEvaluator {
public:
    explicit ForceEvaluator(PairPotential pot, std::size_t threads = 1);

    void compute(const CanonicalState& state, std::vector<double>& out);
    const PairPotential& potential() const { return pot_; }

private:
    void sheet_1d(const CanonicalState& state, std::vector<double>& out);
    void cosine_1d(const CanonicalState& state, std::vector<double>& out);
    void direct(const CanonicalState& state, std::vector<double>& out) const;

    PairPotential pot_;
    std::size_t threads_;
    struct SortKey {
        double q;
        std::size_t index;
    };
    std::vector<SortKey> sorted_;  // position order cached between sheet evaluations
};

std::vector<double> forces(const CanonicalState& state, const PairPotential& pot);

/// Blocked O(n^2) pair sum, regardless of kernel shortcuts.
std::vector<double> forces_direct(const CanonicalState& state, const PairPotential& pot, std::size_t threads = 1);

/// 2K / |sum_i Q_i . F_i|; zero when the virial vanishes.
double virial_ratio(const CanonicalState& state, const std::vector<double>& force, SolitonMass M);

/// Kick-drift-kick leapfrog under H = N0 H_inertial + s . P for a constant
/// gauge (N0, s); the trivial gauge gives the inertial flow. Forces at the
/// current positions are cached between steps.
class LeapfrogIntegrator {
public:
    LeapfrogIntegrator(PairPotential pot, SolitonMass M, std::size_t threads = 1);
    LeapfrogIntegrator(PairPotential pot, SolitonMass M, const GaugeField& gauge, std::size_t threads = 1);

    void step(CanonicalState& state, double dt);
    /// Forces at the current positions of `state` (recomputed if stale).
    const std::vector<double>& current_forces(const CanonicalState& state);
    /// Drop cached forces after the state was modified externally.
    void reset() { cached_ = false; }

private:
    ForceEvaluator eval_;
    SolitonMass mass_;
    double lapse_ = 1.0;
    std::vector<double> shift_;
    std::vector<double> force_;
    bool cached_ = false;
};

/// One inertial leapfrog step with freshly evaluated forces.
CanonicalState step_leapfrog(const CanonicalState& state, const PairPotential& pot, SolitonMass M, double dt);

struct ConservationRecord {
    double t = 0.0;
    double energy = 0.0;
    std::vector<double> momentum;
    double virial = 0.0;
    double wall_time = 0.0;
};

struct ConservationLog {
    std::vector<ConservationRecord> records;

    /// max_t |E(t) - E(0)| / |E(0)| (absolute when E(0) = 0).
    double max_energy_drift() const;
    /// max_t max_a |P_a(t) - P_a(0)|.
    double max_momentum_drift() const;
};

class EvolveAborted : public NumericalError {
public:
    EvolveAborted(const std::string& what, ConservationLog partial)
        : NumericalError(what), log(std::move(partial)) {}
    ConservationLog log;
};

struct EvolveResult {
    CanonicalState final_state;
    ConservationLog log;
    std::vector<CanonicalState> snapshots;
};

/// Called at t = 0 and every `snapshot_stride` steps with the current state and its step index.
using SnapshotObserver = std::function<void(const CanonicalState&, std::size_t)>;

/// Integrates `n_steps` leapfrog steps, logging conservation diagnostics at
/// every snapshot. Energies in the log are those of the inertial Hamiltonian.
EvolveResult evolve(CanonicalState state, const PairPotential& pot, SolitonMass M, const IntegratorConfig& cfg,
                    const SnapshotObserver& observer = {});

/// Same, under a constant gauge; `cfg.dt` is then a coordinate-time step.
EvolveResult evolve_in_gauge(CanonicalState state, const PairPotential& pot, SolitonMass M,
                             const IntegratorConfig& cfg, const GaugeField& gauge,
                             const SnapshotObserver& observer = {});

/// Maps inertial snapshots onto the constant gauge (N0, s): t' = t / N0,
/// Q' = Q + s t', and P' from the canonical-momentum relation with
/// Qdot' = N0 Qdot + s. The result solves Hamilton's equations of the gauged
/// Hamiltonian. Non-constant gauges are rejected.
std::vector<CanonicalState> reparametrize_trajectory(const std::vector<CanonicalState>& snapshots,
                                                     const GaugeField& gauge, SolitonMass M);

}  // namespace qss
