#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qss/pipeline.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Quasi-stationary state pipeline for long-range N-body systems"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(qss::kCodeVersion));

    std::string config_path;
    std::vector<std::string> overrides;
    bool resume = false;
    std::string out_dir;
    auto* run = app.add_subcommand("run", "Run init, evolve, QSS detection, fit and time-gauge analysis");
    run->add_option("config", config_path, "Experiment config file")->required();
    run->add_option("--set", overrides, "Override a config entry, section.key=value (repeatable)");
    run->add_option("-o,--out", out_dir, "Output directory (overrides output.directory)");
    run->add_flag("--resume", resume, "Continue from the checkpoint in the output directory");

    std::string csv_path;
    qss::FitOptions fit_opts;
    double eta0 = 0.0;
    std::string fit_out;
    auto* fit = app.add_subcommand("fit", "Fit single- and two-step distributions to an f(epsilon) table");
    fit->add_option("table", csv_path, "CSV with columns epsilon,f_mean,shell_volume,n_bins")->required();
    auto* eta_opt = fit->add_option("--eta0", eta0, "Fine-grained density (default: largest f_mean)");
    fit->add_flag("--constrain", fit_opts.constrain, "Pin the core plateau to eta0");
    fit->add_option("--margin", fit_opts.margin, "Model-selection margin on the residual ratio");
    fit->add_option("-o,--out", fit_out, "Write the fit JSON to this file");

    std::string run_dir;
    auto* report = app.add_subcommand("report", "Summarise a run directory and emit plot data");
    report->add_option("run_dir", run_dir, "Run output directory")->required();

    qss::SampleOptions sample_opts;
    auto* sample = app.add_subcommand("sample", "Sample particles from the fitted step distribution of a run");
    sample->add_option("run_dir", run_dir, "Run output directory")->required();
    sample->add_option("-n,--count", sample_opts.n, "Number of particles");
    sample->add_option("--seed", sample_opts.seed, "Random seed");
    sample->add_option("-o,--out", sample_opts.output, "Snapshot CSV to write (default <run_dir>/samples.csv)");

    qss::GaugeCheckOptions gauge_opts;
    auto* gauge = app.add_subcommand("gauge-check", "Check that a time translation leaves the diluted lapse unchanged");
    gauge->add_option("run_dir", run_dir, "Run output directory")->required();
    gauge->add_option("--set", gauge_opts.overrides, "Override a config entry, e.g. gauge.kind=constant");
    gauge->add_option("--offset", gauge_opts.offset, "Coordinate-time translation");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (*run) {
        if (!out_dir.empty()) overrides.push_back("output.directory=" + out_dir);
        return qss::cmd_run(config_path, overrides, resume, std::cout, std::cerr);
    }
    if (*fit) {
        if (*eta_opt) fit_opts.eta0 = eta0;
        if (!fit_out.empty()) fit_opts.output = fit_out;
        return qss::cmd_fit(csv_path, fit_opts, std::cout, std::cerr);
    }
    if (*report) return qss::cmd_report(run_dir, std::cout, std::cerr);
    if (*sample) return qss::cmd_sample(run_dir, sample_opts, std::cout, std::cerr);
    if (*gauge) return qss::cmd_gauge_check(run_dir, gauge_opts, std::cout, std::cerr);
    return 2;
}
