#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qss/dynamics.hpp"
#include "qss/model.hpp"

namespace qss {

/// Flat `section.key -> value` view of an INI-style document, remembering the
/// line each entry came from for diagnostics. Keys before the first section
/// header live in the unnamed section and are addressed without a prefix.
class IniDocument {
public:
    struct Entry {
        std::string value;
        int line = 0;
    };

    static IniDocument parse(const std::string& text);
    static IniDocument load(const std::string& path);

    /// Applies `section.key=value`; later overrides win.
    void set(const std::string& assignment);
    void set(const std::string& key, const std::string& value);

    const std::map<std::string, Entry>& entries() const { return entries_; }
    bool has(const std::string& key) const { return entries_.count(key) > 0; }

private:
    std::map<std::string, Entry> entries_;
};

struct ModelSection {
    PotentialKind potential = PotentialKind::sheet1d;
    double coupling = 1.0;
    /// Divide the coupling by the particle count (mean-field scaling).
    bool kac_scaling = true;
    double softening = 0.0;
    double mass = 1.0;
    std::size_t dim = 1;
};

struct InitSection {
    std::size_t n_particles = 10000;
    double position_extent = 1.0;
    double velocity_extent = 1.0;
    std::optional<double> virial_ratio;
    WaterbagSampling sampling = WaterbagSampling::uniform;
    bool symmetric = true;
};

struct IntegratorSection {
    Scheme scheme = Scheme::leapfrog;
    /// Absolute step; otherwise dt_fraction x dynamical time.
    std::optional<double> dt;
    double dt_fraction = 0.01;
    /// Run length in dynamical times, unless n_steps is given.
    double duration = 100.0;
    std::optional<std::size_t> n_steps;
    /// Snapshot spacing in dynamical times, unless snapshot_stride is given.
    double snapshot_interval = 2.0;
    std::optional<std::size_t> snapshot_stride;
    std::size_t threads = 1;
};

struct GridSection {
    /// omega = omega_factor / eta0 unless omega is set.
    double omega_factor = 1.0;
    std::optional<double> omega;
    /// Bin aspect dq/dp; defaults to the waterbag aspect.
    std::optional<double> aspect;
    /// Grid half-widths in units of the waterbag position / momentum extents.
    double q_extent = 3.0;
    double p_extent = 3.0;
};

struct FitSection {
    bool constrain = false;
    double model_selection_margin = 0.5;
    std::size_t n_energy_bins = 60;
};

enum class GaugeKind { trivial, constant, sinusoidal };

std::string to_string(GaugeKind k);

struct GaugeSection {
    GaugeKind kind = GaugeKind::trivial;
    double lapse = 1.0;
    std::vector<double> shift;
    double amplitude = 0.0;
    double frequency = 0.0;
    double wavenumber = 0.0;
    /// Coordinate time at which the lapse is sampled.
    double sample_time = 0.0;
    std::size_t samples_per_axis = 1;
};

struct AnalysisSection {
    double discrepancy_tol = 0.05;
    double qss_threshold = 0.02;
    std::size_t qss_window = 5;
    /// Stationary windows in a row required to declare a QSS.
    std::size_t qss_consecutive = 5;
};

enum class SnapshotFormat { none, csv, binary };

std::string to_string(SnapshotFormat f);

struct OutputSection {
    std::string directory = "run";
    SnapshotFormat snapshots = SnapshotFormat::none;
    /// Adds wall-clock timestamps to the manifest (breaks byte-reproducibility).
    bool record_wall_clock = false;
};

struct ExperimentConfig {
    std::uint64_t seed = 42;
    ModelSection model;
    InitSection init;
    IntegratorSection integrator;
    GridSection grid;
    FitSection fit;
    GaugeSection gauge;
    AnalysisSection analysis;
    OutputSection output;

    static ExperimentConfig from_document(const IniDocument& doc);
    static ExperimentConfig parse(const std::string& text);
    static ExperimentConfig load(const std::string& path, const std::vector<std::string>& overrides = {});

    /// Canonical text form; parse(serialize()) reproduces this config.
    std::string serialize() const;
    void validate() const;

    PairPotential pair_potential() const;
    SolitonMass soliton_mass() const { return SolitonMass(model.mass); }
    WaterbagInit waterbag() const;
    GaugeField gauge_field() const;
};

/// Shortest round-trip decimal form of a double.
std::string format_double(double x);

}  // namespace qss
