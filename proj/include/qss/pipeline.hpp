#pragma once

#include <cstddef>
#include <cstdint>
#include <exception>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "qss/config.hpp"

namespace qss {

inline constexpr const char* kCodeVersion = "1.0.0";

/// Exit status for an exception: 2 config/schema, 3 numerical, 4 missing artifact, 1 otherwise.
int exit_code_for(const std::exception& e);

struct StageStatus {
    std::string name;
    /// "ok", "failed", "skipped", "degenerate" or "not-detected".
    std::string status;
    std::string detail;
    double seconds = 0.0;
};

struct RunOptions {
    /// Continue from the checkpoint in the output directory when one exists.
    bool resume = false;
    /// Path of the config file, recorded with its digest in the manifest.
    std::string config_path;
    /// Progress messages; null for silence.
    std::ostream* log = nullptr;
    /// Stop after the checkpoint at this step, as an interrupted run would (exit code 1).
    std::optional<std::size_t> halt_after_step;
};

struct RunOutcome {
    int exit_code = 0;
    std::string directory;
    std::vector<StageStatus> stages;
    std::vector<std::string> notices;
    bool free_system = false;
    bool qss_detected = false;
    std::optional<double> qss_time;
    double energy_drift = 0.0;
    double momentum_drift = 0.0;
    std::string error;
};

/// init -> evolve (coarse-graining every snapshot) -> QSS detection -> fit ->
/// time-gauge analysis, writing artifacts into cfg.output.directory as each
/// stage completes. Errors are caught, recorded in the manifest, and mapped
/// onto the exit code; upstream artifacts stay in place.
RunOutcome run_pipeline(const ExperimentConfig& cfg, const RunOptions& opts = {});

int cmd_run(const std::string& config_path, const std::vector<std::string>& overrides, bool resume,
            std::ostream& out, std::ostream& err);

struct FitOptions {
    std::optional<double> eta0;
    bool constrain = false;
    double margin = 0.5;
    /// Write the fit JSON here instead of printing it.
    std::optional<std::string> output;
};

int cmd_fit(const std::string& csv_path, const FitOptions& opts, std::ostream& out, std::ostream& err);

/// Writes <run_dir>/report/{summary.txt, staircase.csv, discrepancy_map.csv}.
/// A run directory without a manifest exits with 4; absent or altered
/// artifacts are listed as gaps in a partial report.
int cmd_report(const std::string& run_dir, std::ostream& out, std::ostream& err);

struct SampleOptions {
    std::size_t n = 100000;
    std::uint64_t seed = 42;
    std::string output;
};

/// Draws particles from the fitted step distribution of a completed run.
int cmd_sample(const std::string& run_dir, const SampleOptions& opts, std::ostream& out, std::ostream& err);

struct GaugeCheckOptions {
    std::vector<std::string> overrides;
    double offset = 1.0;
};

/// Compares the diluted-time report of a run's fit at the gauge sample time
/// and at sample time + offset.
int cmd_gauge_check(const std::string& run_dir, const GaugeCheckOptions& opts, std::ostream& out,
                    std::ostream& err);

}  // namespace qss
