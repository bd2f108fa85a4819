#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "qss/mean_field.hpp"
#include "qss/model.hpp"
#include "qss/mu_space.hpp"
#include "qss/qss_fit.hpp"

namespace qss {

/// Per-bin densities of the two step components, evaluated at bin centres.
struct ComponentDecomposition {
    MuGrid grid;
    std::vector<double> f1, f2;
    std::vector<double> epsilon;
    /// Bins where both components are non-zero.
    std::vector<bool> overlap;
    StepVerdict verdict = StepVerdict::single;

    std::size_t overlap_count() const;
    std::size_t occupied_count() const;
};

/// For a single-step verdict the single-step fit populates f1 and f2 is zero.
ComponentDecomposition decompose_components(const TwoStepFit& fit, const MuGrid& grid, const MeanFieldPotential& mf,
                                            SolitonMass M);

struct Occupancy {
    std::int64_t nu1 = 0;
    std::int64_t nu2 = 0;
};

/// nu_i = round(f_i omega / M), ties to even: condensate copies per bin.
std::vector<Occupancy> bin_occupancy(const ComponentDecomposition& decomp, double omega, SolitonMass M = SolitonMass(1.0));

/// Where the lapse is read inside each bin.
struct LapseSampling {
    /// 1 samples the bin centre only; k > 1 also samples a k^d stratified
    /// lattice of positions inside the bin and reports the spread.
    std::size_t samples_per_axis = 1;
    /// Coordinate time at which N(x, t) is read.
    double t = 0.0;
};

struct DilutedBin {
    std::size_t bin = 0;
    std::int64_t nu1 = 0, nu2 = 0;
    double lapse = 0.0;
    double lapse_spread = 0.0;
    double dl1 = 0.0, dl2 = 0.0;
    double discrepancy = 0.0;
    double relative_discrepancy = 0.0;
    bool overlap = false;
    /// f2 / f1 on overlap bins (ratio of diluted ticks), NaN elsewhere.
    double tick_ratio = 0.0;
};

struct DilutedTimeReport {
    std::vector<DilutedBin> bins;  // occupied bins only, in flat-index order
    double omega = 0.0;
    double tolerance = 0.05;
    double max_discrepancy = 0.0;
    double max_relative_discrepancy = 0.0;
    double overlap_fraction = 0.0;
    bool inequivalent = false;
};

/// dl_i = f_i omega N per occupied bin, the discrepancy |dl1 - dl2| and the
/// verdict: inequivalent iff some overlap bin has D / (dl1 + dl2) > tolerance.
DilutedTimeReport diluted_lapse(const ComponentDecomposition& decomp, const GaugeField& gauge, double omega,
                                const LapseSampling& sampling = {}, double tolerance = 0.05,
                                SolitonMass M = SolitonMass(1.0));

/// True iff both reports cover the same bins with dl fields equal to 1e-12.
bool proper_time_translation_check(const DilutedTimeReport& a, const DilutedTimeReport& b);

}  // namespace qss
