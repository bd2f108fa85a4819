#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "qss/mean_field.hpp"
#include "qss/model.hpp"
#include "qss/mu_space.hpp"

namespace qss {

/// eta * theta(ef - epsilon).
struct StepFit {
    double eta = 0.0;
    double ef = 0.0;
    /// Shell-volume weighted RMS deviation over non-missing shells.
    double residual = 0.0;
};

enum class StepVerdict { single, two_step };

std::string to_string(StepVerdict v);

/// eta1 theta(ef1 - epsilon) + eta2 theta(ef2 - epsilon) with ef1 <= ef2:
/// a core plateau of height eta1 + eta2 out to ef1 and a shoulder of height
/// eta2 out to ef2.
struct TwoStepFit {
    double eta1 = 0.0;
    double eta2 = 0.0;
    double ef1 = 0.0;
    double ef2 = 0.0;
    double residual = 0.0;
    bool constrained = false;
    StepFit single;
    double margin = 0.5;
    StepVerdict verdict = StepVerdict::single;

    double value(double epsilon) const;
    double peak() const { return eta1 + eta2; }
};

/// Least-squares step over every bin edge of the table.
/// Throws DegenerateFit when the table carries no mass.
StepFit fit_single_step(const EnergyTable& table, double eta0);

/// Exhaustive scan over edge pairs ef1 <= ef2 with closed-form amplitudes.
/// With `constrain` the core plateau is pinned to eta0. The verdict is
/// two_step when the residual falls below margin x the single-step residual.
TwoStepFit fit_two_step(const EnergyTable& table, double eta0, bool constrain, double margin = 0.5,
                        std::size_t threads = 1);

/// Energy table sampled from a step model at the given shell centres, one
/// phase-space bin of volume `shell_volume` per shell.
EnergyTable synthetic_table(const TwoStepFit& model, double lo, double width, std::size_t bins,
                            double shell_volume = 1.0);

struct QssSample {
    CanonicalState state;
    /// Integral of the model density over phase space.
    double total_mass = 0.0;
    /// total_mass / n: the mass each sample carries when histogrammed.
    double particle_weight = 0.0;
    double acceptance = 0.0;
};

/// Rejection-samples n points with density f(epsilon(Q, P)), epsilon =
/// |P|^2 / 2M + Phi_MF(Q), over the lattice of `mf`.
QssSample sample_from_qss(const TwoStepFit& fit, const MeanFieldPotential& mf, SolitonMass M, std::size_t n,
                          std::uint64_t seed);

/// eta / (1 + exp((epsilon - mu) / temperature)).
struct FermiFit {
    double eta = 0.0;
    double mu = 0.0;
    double temperature = 0.0;
    double residual = 0.0;
};

/// Finite-temperature diagnostic: scans mu over bin edges and temperature on a
/// logarithmic ladder of bin widths, with closed-form eta.
FermiFit fit_fermi(const EnergyTable& table);

}  // namespace qss
