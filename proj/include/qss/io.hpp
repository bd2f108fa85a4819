#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "qss/dynamics.hpp"
#include "qss/mean_field.hpp"
#include "qss/mu_space.hpp"
#include "qss/qss_fit.hpp"
#include "qss/time_gauge.hpp"

namespace qss {

using json = nlohmann::ordered_json;

/// Hex SHA-256 of a file's bytes.
std::string sha256_file(const std::string& path);

void write_text(const std::string& path, const std::string& content);
std::string read_text(const std::string& path);
void write_json(const std::string& path, const json& j);
json read_json(const std::string& path);

/// CSV cell for a double: shortest round-trip form, "nan" for NaN.
std::string csv_number(double x);

void write_conservation_csv(const std::string& path, const ConservationLog& log);

void write_energy_table_csv(const std::string& path, const EnergyTable& table);
/// Reads (epsilon, f_mean, shell_volume, n_bins) rows with uniformly spaced
/// epsilon. Throws SchemaError naming the offending line or column.
EnergyTable read_energy_table_csv(const std::string& path);
EnergyTable parse_energy_table_csv(std::istream& in);

void write_mean_field_csv(const std::string& path, const MeanFieldPotential& mf);
MeanFieldPotential read_mean_field_csv(const std::string& path);

/// Occupied bins only: (q_index..., p_index..., f).
void write_distribution_csv(const std::string& path, const CoarseGrainedDistribution& dist);

void write_discrepancy_csv(const std::string& path, const DilutedTimeReport& report,
                           const ComponentDecomposition& decomp);

/// Snapshot rows (t, particle_id, Q..., P...). The header is written when `header` is set.
void write_snapshot_csv(std::ostream& out, const CanonicalState& state, bool header);
std::vector<CanonicalState> read_snapshot_csv(const std::string& path);

/// Length-prefixed binary snapshot record tagged "QSSSNAP1".
void write_snapshot_binary(std::ostream& out, const CanonicalState& state);
CanonicalState read_snapshot_binary(std::istream& in);
std::vector<CanonicalState> read_snapshot_binary_file(const std::string& path);

json to_json(const MuGrid& grid);
MuGrid grid_from_json(const json& j);
json to_json(const StepFit& fit);
json to_json(const TwoStepFit& fit);
TwoStepFit two_step_from_json(const json& j);
json to_json(const DilutedTimeReport& report);

}  // namespace qss
