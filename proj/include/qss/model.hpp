#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "qss/mean_field.hpp"

namespace qss {

/// Mass shared by every condensate of an ensemble (natural units).
class SolitonMass {
public:
    explicit SolitonMass(double value = 1.0);
    double value() const { return value_; }

private:
    double value_;
};

enum class PotentialKind { newtonian3d, sheet1d, cosine };

std::string to_string(PotentialKind kind);
PotentialKind potential_kind_from_string(const std::string& name);

/// Binary interaction energy as a function of separation.
///
///   newtonian3d:  -coupling / sqrt(r^2 + softening^2)   (Plummer-softened gravity)
///   sheet1d:       coupling * r                          (infinite sheets in one dimension)
///   cosine:       -coupling * cos(r)                     (mean-field rotator model)
///
/// `coupling` absorbs G * M^2. Only newtonian3d accepts a softening length.
struct PairPotential {
    PotentialKind kind = PotentialKind::newtonian3d;
    double softening = 0.0;
    double coupling = 1.0;

    void validate() const;
    bool singular_at_contact() const { return kind == PotentialKind::newtonian3d && softening == 0.0; }
};

double pair_potential(const PairPotential& pot, double r);

/// dPhi/dr. Zero at r = 0 for the non-singular kinds.
double pair_potential_derivative(const PairPotential& pot, double r);

/// Force on particle i due to j, written as factor * (Q_i - Q_j).
/// Coincident particles exert no force on each other unless the kernel is singular.
double pair_force_factor(const PairPotential& pot, double r);

/// Canonical (Q, P) state of n condensates in `dim` spatial dimensions,
/// stored row-major: particle i occupies [i*dim, (i+1)*dim).
struct CanonicalState {
    std::size_t dim = 1;
    std::vector<double> q;
    std::vector<double> p;
    double t = 0.0;

    CanonicalState() = default;
    CanonicalState(std::size_t dim_, std::size_t n);

    std::size_t size() const { return dim == 0 ? 0 : q.size() / dim; }
    std::span<const double> position(std::size_t i) const { return {q.data() + i * dim, dim}; }
    std::span<const double> momentum(std::size_t i) const { return {p.data() + i * dim, dim}; }
    std::span<double> position(std::size_t i) { return {q.data() + i * dim, dim}; }
    std::span<double> momentum(std::size_t i) { return {p.data() + i * dim, dim}; }

    /// Throws ConfigError on incongruent shapes or non-finite entries.
    void validate() const;
};

/// Time-lapse function N(x, t) > 0 and shift vector N^a(x, t).
class GaugeField {
public:
    using LapseFn = std::function<double(std::span<const double>, double)>;
    using ShiftFn = std::function<void(std::span<const double>, double, std::span<double>)>;

    /// N = 1, N^a = 0: proper time of the inertial frame.
    static GaugeField trivial(std::size_t dim);
    static GaugeField constant(double lapse, std::vector<double> shift);
    /// N = base + amplitude * sin(omega * t + wavenumber * sum_a x^a), zero shift.
    static GaugeField sinusoidal(std::size_t dim, double base, double amplitude, double omega,
                                 double wavenumber);
    static GaugeField custom(std::size_t dim, LapseFn lapse, ShiftFn shift, std::string name);

    std::size_t dim() const { return dim_; }
    const std::string& name() const { return name_; }
    bool is_constant() const { return constant_; }
    bool is_trivial() const;

    /// Throws NumericalError if the sampled lapse is not strictly positive.
    double lapse(std::span<const double> x, double t) const;
    std::vector<double> shift(std::span<const double> x, double t) const;
    void shift(std::span<const double> x, double t, std::span<double> out) const;

    /// Valid only for constant gauges.
    double constant_lapse() const;
    const std::vector<double>& constant_shift() const;

private:
    GaugeField() = default;

    std::size_t dim_ = 1;
    std::string name_;
    bool constant_ = false;
    double lapse0_ = 1.0;
    std::vector<double> shift0_;
    LapseFn lapse_fn_;
    ShiftFn shift_fn_;
};

double kinetic_energy(const CanonicalState& state, SolitonMass M);

/// Sum over unordered pairs of Phi(|Q_i - Q_j|). Uses exact O(n log n) / O(n)
/// rearrangements for one-dimensional sheet and cosine systems.
double potential_energy(const CanonicalState& state, const PairPotential& pot);

std::vector<double> total_momentum(const CanonicalState& state);

/// H = sum_C N_C { P_C^2 / 2M + 1/2 sum_{C' != C} Phi } + sum_C N_C^a P_{C,a},
/// with N_C and N_C^a sampled at Q_C and the state time.
double total_hamiltonian(const CanonicalState& state, const PairPotential& pot,
                         const GaugeField& gauge, SolitonMass M);

/// P^a = M (Qdot^a - N^a) / N.
std::vector<double> canonical_momentum(std::span<const double> qdot, double lapse,
                                       std::span<const double> shift, SolitonMass M);

/// Inverse of canonical_momentum: Qdot^a = N P^a / M + N^a.
std::vector<double> velocity_from_momentum(std::span<const double> p, double lapse,
                                           std::span<const double> shift, SolitonMass M);

/// epsilon = |P|^2 / 2M + Phi_MF(Q).
double one_particle_energy(std::span<const double> q, std::span<const double> p,
                           const MeanFieldPotential& mf, SolitonMass M);

/// A condensate velocity read as the physical shift of the rearranged frame: N^a = -Qdot^a.
std::vector<double> velocity_to_physical_shift(std::span<const double> qdot);

}  // namespace qss
