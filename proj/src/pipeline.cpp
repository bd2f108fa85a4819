#include "qss/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <ctime>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include "qss/dynamics.hpp"
#include "qss/error.hpp"
#include "qss/io.hpp"
#include "qss/mu_space.hpp"
#include "qss/qss_fit.hpp"
#include "qss/time_gauge.hpp"

namespace qss {

namespace fs = std::filesystem;

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const SchemaError*>(&e)) return 2;
    if (dynamic_cast<const NumericalError*>(&e)) return 3;
    if (dynamic_cast<const MissingArtifact*>(&e)) return 4;
    return 1;
}

namespace {

constexpr char kCheckpointMagic[8] = {'Q', 'S', 'S', 'C', 'K', 'P', 'T', '1'};
const char* const kCheckpointFile = "checkpoint.bin";

std::string utc_now() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream ss;
    ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return ss.str();
}

// The run's own config as stored inside its directory: the output location
// reads "." so that artifacts do not depend on where the run was written.
std::string config_echo_text(const ExperimentConfig& cfg) {
    ExperimentConfig echo = cfg;
    echo.output.directory = ".";
    return echo.serialize();
}

json config_echo(const ExperimentConfig& cfg) {
    json j = json::object();
    const auto doc = IniDocument::parse(config_echo_text(cfg));
    for (const auto& [key, entry] : doc.entries()) j[key] = entry.value;
    return j;
}

// Per-snapshot incompressibility diagnostics.
struct SnapshotStats {
    double t = 0.0;
    double max_f = 0.0;
    std::uint64_t min_count = 0;
    std::uint64_t occupied = 0;
    double out_of_grid = 0.0;
};

// Everything the evolve stage accumulates, and what a checkpoint stores.
struct EvolveProgress {
    std::size_t step = 0;
    CanonicalState state;
    ConservationLog log;
    std::vector<std::pair<double, double>> history;
    std::size_t consecutive = 0;
    std::optional<double> first_time;
    std::optional<double> qss_time;
    std::deque<CanonicalState> window;
    std::vector<CanonicalState> captured;
    std::vector<SnapshotStats> stats;
    std::uint64_t snapshot_offset = 0;
};

template <class T>
void put(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw SchemaError("truncated checkpoint");
    return v;
}

void put_optional(std::ostream& out, const std::optional<double>& v) {
    put<std::uint8_t>(out, v ? 1 : 0);
    put<double>(out, v.value_or(0.0));
}

std::optional<double> get_optional(std::istream& in) {
    const auto has = get<std::uint8_t>(in);
    const auto v = get<double>(in);
    return has ? std::optional<double>(v) : std::nullopt;
}

void write_checkpoint(const fs::path& path, const std::string& config_text, const EvolveProgress& p) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw Error("cannot write checkpoint '" + tmp.string() + "'");
        out.write(kCheckpointMagic, sizeof kCheckpointMagic);
        put<std::uint64_t>(out, config_text.size());
        out.write(config_text.data(), static_cast<std::streamsize>(config_text.size()));
        put<std::uint64_t>(out, p.step);
        write_snapshot_binary(out, p.state);
        put<std::uint64_t>(out, p.log.records.size());
        for (const auto& r : p.log.records) {
            put(out, r.t);
            put(out, r.energy);
            put<std::uint64_t>(out, r.momentum.size());
            for (double m : r.momentum) put(out, m);
            put(out, r.virial);
            put(out, r.wall_time);
        }
        put<std::uint64_t>(out, p.history.size());
        for (const auto& [t, m] : p.history) {
            put(out, t);
            put(out, m);
        }
        put<std::uint64_t>(out, p.consecutive);
        put_optional(out, p.first_time);
        put_optional(out, p.qss_time);
        put<std::uint64_t>(out, p.window.size());
        for (const auto& s : p.window) write_snapshot_binary(out, s);
        put<std::uint64_t>(out, p.captured.size());
        for (const auto& s : p.captured) write_snapshot_binary(out, s);
        put<std::uint64_t>(out, p.stats.size());
        for (const auto& s : p.stats) {
            put(out, s.t);
            put(out, s.max_f);
            put(out, s.min_count);
            put(out, s.occupied);
            put(out, s.out_of_grid);
        }
        put<std::uint64_t>(out, p.snapshot_offset);
        if (!out) throw Error("checkpoint write failed");
    }
    fs::rename(tmp, path);
}

EvolveProgress read_checkpoint(const fs::path& path, const std::string& config_text) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifact("missing checkpoint '" + path.string() + "'");
    char magic[8];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) throw SchemaError("not a checkpoint file");
    const auto len = get<std::uint64_t>(in);
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    if (text != config_text) throw ConfigError("resume", "checkpoint was written with a different configuration");
    EvolveProgress p;
    p.step = get<std::uint64_t>(in);
    p.state = read_snapshot_binary(in);
    const auto n_rec = get<std::uint64_t>(in);
    for (std::uint64_t i = 0; i < n_rec; ++i) {
        ConservationRecord r;
        r.t = get<double>(in);
        r.energy = get<double>(in);
        r.momentum.resize(get<std::uint64_t>(in));
        for (auto& m : r.momentum) m = get<double>(in);
        r.virial = get<double>(in);
        r.wall_time = get<double>(in);
        p.log.records.push_back(std::move(r));
    }
    const auto n_hist = get<std::uint64_t>(in);
    for (std::uint64_t i = 0; i < n_hist; ++i) {
        const double t = get<double>(in);
        p.history.emplace_back(t, get<double>(in));
    }
    p.consecutive = get<std::uint64_t>(in);
    p.first_time = get_optional(in);
    p.qss_time = get_optional(in);
    const auto n_win = get<std::uint64_t>(in);
    for (std::uint64_t i = 0; i < n_win; ++i) p.window.push_back(read_snapshot_binary(in));
    const auto n_cap = get<std::uint64_t>(in);
    for (std::uint64_t i = 0; i < n_cap; ++i) p.captured.push_back(read_snapshot_binary(in));
    const auto n_stats = get<std::uint64_t>(in);
    for (std::uint64_t i = 0; i < n_stats; ++i) {
        SnapshotStats s;
        s.t = get<double>(in);
        s.max_f = get<double>(in);
        s.min_count = get<std::uint64_t>(in);
        s.occupied = get<std::uint64_t>(in);
        s.out_of_grid = get<double>(in);
        p.stats.push_back(s);
    }
    p.snapshot_offset = get<std::uint64_t>(in);
    return p;
}

CoarseGrainedDistribution average_distribution(const std::vector<CoarseGrainedDistribution>& dists) {
    CoarseGrainedDistribution avg = dists.back();
    const double k = static_cast<double>(dists.size());
    std::fill(avg.f.begin(), avg.f.end(), 0.0);
    std::fill(avg.counts.begin(), avg.counts.end(), 0);
    avg.total_mass = 0.0;
    avg.out_of_grid_mass = 0.0;
    for (const auto& d : dists) {
        for (std::size_t b = 0; b < avg.f.size(); ++b) {
            avg.f[b] += d.f[b];
            avg.counts[b] += d.counts[b];
        }
        avg.total_mass += d.total_mass;
        avg.out_of_grid_mass += d.out_of_grid_mass;
    }
    for (auto& v : avg.f) v /= k;
    avg.total_mass /= k;
    avg.out_of_grid_mass /= k;
    return avg;
}

json gauge_json(const ExperimentConfig& cfg) {
    return json{{"kind", to_string(cfg.gauge.kind)},
                {"lapse", cfg.gauge.lapse},
                {"shift", cfg.gauge.shift},
                {"amplitude", cfg.gauge.amplitude},
                {"frequency", cfg.gauge.frequency},
                {"wavenumber", cfg.gauge.wavenumber},
                {"sample_time", cfg.gauge.sample_time},
                {"samples_per_axis", cfg.gauge.samples_per_axis}};
}

// Bookkeeping for artifacts and stages of one run directory.
class RunRecorder {
public:
    RunRecorder(fs::path dir, bool wall_clock, std::ostream* log) : dir_(std::move(dir)), wall_(wall_clock), log_(log) {
        if (wall_) started_ = utc_now();
    }

    fs::path path(const std::string& name) const { return dir_ / name; }

    void emitted(const std::string& name) {
        if (std::find(outputs_.begin(), outputs_.end(), name) == outputs_.end()) outputs_.push_back(name);
    }

    void say(const std::string& msg) const {
        if (log_) *log_ << msg << '\n';
    }

    template <class F>
    void stage(const std::string& name, F&& body) {
        StageStatus st;
        st.name = name;
        st.status = "ok";
        const auto t0 = std::chrono::steady_clock::now();
        say("[" + name + "] started");
        try {
            body(st);
        } catch (...) {
            st.status = "failed";
            st.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            stages_.push_back(st);
            throw;
        }
        st.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        say("[" + name + "] " + st.status + (st.detail.empty() ? "" : ": " + st.detail));
        stages_.push_back(st);
    }

    std::vector<StageStatus>& stages() { return stages_; }

    void write_manifest(const ExperimentConfig& cfg, const RunOptions& opts, const RunOutcome& outcome) {
        json m;
        m["schema"] = "qss run_manifest v1";
        m["code_version"] = kCodeVersion;
        if (wall_) {
            m["started_utc"] = started_;
            m["finished_utc"] = utc_now();
        }
        m["seed"] = cfg.seed;
        m["config"] = config_echo(cfg);
        json inputs = json::array();
        if (!opts.config_path.empty() && fs::exists(opts.config_path))
            inputs.push_back(json{{"file", fs::path(opts.config_path).filename().string()},
                                  {"sha256", sha256_file(opts.config_path)}});
        m["inputs"] = inputs;
        json stages = json::array();
        for (const auto& s : stages_) {
            json j{{"name", s.name}, {"status", s.status}};
            if (!s.detail.empty()) j["detail"] = s.detail;
            if (wall_) j["seconds"] = s.seconds;
            stages.push_back(j);
        }
        m["stages"] = stages;
        m["notices"] = outcome.notices;
        if (!outcome.error.empty()) m["error"] = outcome.error;
        m["exit_code"] = outcome.exit_code;
        json outputs = json::array();
        for (const auto& name : outputs_) {
            const auto p = path(name);
            if (!fs::exists(p)) continue;
            outputs.push_back(json{{"file", name}, {"bytes", fs::file_size(p)}, {"sha256", sha256_file(p.string())}});
        }
        m["outputs"] = outputs;
        write_json(path("manifest.json").string(), m);
    }

private:
    fs::path dir_;
    bool wall_;
    std::ostream* log_;
    std::string started_;
    std::vector<std::string> outputs_;
    std::vector<StageStatus> stages_;
};

}  // namespace

RunOutcome run_pipeline(const ExperimentConfig& cfg, const RunOptions& opts) {
    cfg.validate();
    RunOutcome outcome;
    const fs::path dir(cfg.output.directory);
    fs::create_directories(dir);
    outcome.directory = dir.string();
    RunRecorder rec(dir, cfg.output.record_wall_clock, opts.log);

    const std::string config_text = config_echo_text(cfg);
    const SolitonMass M = cfg.soliton_mass();
    const PairPotential pot = cfg.pair_potential();
    outcome.free_system = cfg.model.coupling == 0.0;

    try {
        write_text(rec.path("config.ini").string(), config_text);
        rec.emitted("config.ini");

        Waterbag wb;
        rec.stage("init", [&](StageStatus& st) {
            wb = init_waterbag(cfg.waterbag(), M, pot);
            std::ostringstream d;
            d << "n=" << wb.state.size() << " eta0=" << format_double(wb.eta0)
              << " t_dyn=" << format_double(wb.dynamical_time) << " virial=" << format_double(wb.virial_ratio);
            st.detail = d.str();
        });

        const auto& ic = cfg.integrator;
        IntegratorConfig icfg;
        icfg.scheme = ic.scheme;
        icfg.threads = ic.threads;
        icfg.store_snapshots = false;
        icfg.dt = ic.dt ? *ic.dt : ic.dt_fraction * wb.dynamical_time;
        std::size_t total_steps, stride;
        if (ic.n_steps) {
            total_steps = *ic.n_steps;
        } else {
            const double steps = ic.dt ? ic.duration * wb.dynamical_time / *ic.dt : ic.duration / ic.dt_fraction;
            total_steps = static_cast<std::size_t>(std::max(1.0, std::round(steps)));
        }
        if (ic.snapshot_stride) {
            stride = *ic.snapshot_stride;
        } else {
            const double s = ic.dt ? ic.snapshot_interval * wb.dynamical_time / *ic.dt : ic.snapshot_interval / ic.dt_fraction;
            stride = static_cast<std::size_t>(std::max(1.0, std::round(s)));
        }
        icfg.snapshot_stride = stride;

        const double pb = M.value() * wb.velocity_extent;
        const double omega = cfg.grid.omega.value_or(cfg.grid.omega_factor / wb.eta0);
        const double aspect = cfg.grid.aspect.value_or(wb.position_extent / pb);
        const MuGrid grid = MuGrid::with_omega(cfg.model.dim, omega, aspect, cfg.grid.q_extent * wb.position_extent,
                                               cfg.grid.p_extent * pb);

        EvolveProgress prog;
        prog.state = wb.state;
        const fs::path ckpt = rec.path(kCheckpointFile);
        bool resumed = false;
        if (opts.resume) {
            if (fs::exists(ckpt)) {
                prog = read_checkpoint(ckpt, config_text);
                resumed = true;
                outcome.notices.push_back("resumed from checkpoint at step " + std::to_string(prog.step));
            } else {
                outcome.notices.push_back("no checkpoint found; started from the initial state");
            }
        }

        const std::string snap_name = cfg.output.snapshots == SnapshotFormat::csv      ? "snapshots.csv"
                                      : cfg.output.snapshots == SnapshotFormat::binary ? "snapshots.bin"
                                                                                       : "";
        std::ofstream snap_out;
        if (!snap_name.empty()) {
            const auto sp = rec.path(snap_name);
            if (resumed && fs::exists(sp)) {
                fs::resize_file(sp, prog.snapshot_offset);
                snap_out.open(sp, std::ios::binary | std::ios::app);
            } else {
                snap_out.open(sp, std::ios::binary | std::ios::trunc);
            }
            if (!snap_out) throw Error("cannot write '" + sp.string() + "'");
            rec.emitted(snap_name);
        }

        rec.stage("evolve", [&](StageStatus& st) {
            QssDetector detector(cfg.analysis.qss_threshold, cfg.analysis.qss_window);
            if (resumed && !outcome.free_system) {
                for (const auto& s : prog.window) detector.push(coarse_grain(s, grid, M));
                detector.restore(prog.history, prog.consecutive, prog.first_time);
            }
            auto process = [&](const CanonicalState& s, std::size_t step) {
                if (snap_out.is_open()) {
                    if (cfg.output.snapshots == SnapshotFormat::csv)
                        write_snapshot_csv(snap_out, s, step == 0);
                    else
                        write_snapshot_binary(snap_out, s);
                    snap_out.flush();
                }
                if (!outcome.free_system) {
                    auto dist = coarse_grain(s, grid, M);
                    prog.stats.push_back(SnapshotStats{dist.t, dist.max_f(), dist.min_occupied_count(),
                                                       dist.occupied_bins(), dist.out_of_grid_mass});
                    detector.push(std::move(dist));
                    prog.window.push_back(s);
                    if (prog.window.size() > cfg.analysis.qss_window) prog.window.pop_front();
                    if (!prog.qss_time && detector.consecutive() >= cfg.analysis.qss_consecutive) {
                        prog.qss_time = s.t;
                        prog.captured.assign(prog.window.begin(), prog.window.end());
                    }
                    prog.history = detector.history();
                    prog.consecutive = detector.consecutive();
                    prog.first_time = detector.first_converged_time();
                }
                prog.snapshot_offset = snap_out.is_open() ? static_cast<std::uint64_t>(snap_out.tellp()) : 0;
            };

            const auto evolve_start = std::chrono::steady_clock::now();
            if (!resumed) process(prog.state, 0);
            // One integrator call per snapshot interval, with a checkpoint after each.
            while (prog.step < total_steps) {
                const std::size_t next = std::min(total_steps, (prog.step / stride + 1) * stride);
                IntegratorConfig chunk = icfg;
                chunk.n_steps = next - prog.step;
                chunk.snapshot_stride = chunk.n_steps;
                EvolveResult r;
                try {
                    r = evolve(prog.state, pot, M, chunk);
                } catch (const EvolveAborted& e) {
                    const std::size_t skip = prog.log.records.empty() ? 0 : 1;
                    prog.log.records.insert(prog.log.records.end(),
                                            e.log.records.begin() + static_cast<std::ptrdiff_t>(std::min(skip, e.log.records.size())),
                                            e.log.records.end());
                    write_conservation_csv(rec.path("conservation.csv").string(), prog.log);
                    rec.emitted("conservation.csv");
                    throw;
                }
                const std::size_t skip = prog.log.records.empty() ? 0 : 1;
                const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - evolve_start).count();
                for (auto& record : r.log.records) record.wall_time = cfg.output.record_wall_clock ? elapsed : 0.0;
                prog.log.records.insert(prog.log.records.end(),
                                        r.log.records.begin() + static_cast<std::ptrdiff_t>(skip), r.log.records.end());
                prog.state = std::move(r.final_state);
                prog.step = next;
                if (next % stride == 0) process(prog.state, next);
                write_checkpoint(ckpt, config_text, prog);
                rec.emitted(kCheckpointFile);
                if (opts.halt_after_step && prog.step >= *opts.halt_after_step && prog.step < total_steps)
                    throw Error("evolve interrupted at step " + std::to_string(prog.step));
            }
            rec.emitted(kCheckpointFile);
            outcome.energy_drift = prog.log.max_energy_drift();
            outcome.momentum_drift = prog.log.max_momentum_drift();
            std::ostringstream d;
            d << "steps=" << total_steps << " dt=" << format_double(icfg.dt)
              << " energy_drift=" << format_double(outcome.energy_drift)
              << " momentum_drift=" << format_double(outcome.momentum_drift);
            st.detail = d.str();
        });
        snap_out.close();
        write_conservation_csv(rec.path("conservation.csv").string(), prog.log);
        rec.emitted("conservation.csv");

        const double casimir_expected = casimir_bound_expected(wb.eta0, omega, M);
        json qj;
        qj["schema"] = "qss detection v1";
        qj["eta0"] = wb.eta0;
        qj["dynamical_time"] = wb.dynamical_time;
        qj["dt"] = icfg.dt;
        qj["snapshot_stride"] = stride;
        qj["threshold"] = cfg.analysis.qss_threshold;
        qj["window"] = cfg.analysis.qss_window;
        qj["consecutive_required"] = cfg.analysis.qss_consecutive;
        qj["grid"] = to_json(grid);

        if (outcome.free_system) {
            rec.stage("qss_detect", [&](StageStatus& st) {
                st.status = "skipped";
                st.detail = "free system: trivially stationary";
            });
            outcome.qss_detected = true;
            outcome.qss_time = 0.0;
            qj["free_system"] = true;
            qj["detected"] = true;
            qj["qss_time"] = 0.0;
            qj["note"] = "free-system: zero coupling, every one-particle energy is conserved";
            write_json(rec.path("qss.json").string(), qj);
            rec.emitted("qss.json");
            rec.stage("fit", [&](StageStatus& st) {
                st.status = "degenerate";
                st.detail = "free system: no mean field to bind a step distribution";
            });
            rec.stage("time_gauge", [&](StageStatus& st) {
                st.status = "skipped";
                st.detail = "no fit";
            });
            outcome.notices.push_back("free-system: coupling is zero; QSS trivially stationary and fit degenerate");
        } else {
            std::vector<CanonicalState> window_states;
            rec.stage("qss_detect", [&](StageStatus& st) {
                outcome.qss_detected = prog.qss_time.has_value();
                outcome.qss_time = prog.qss_time;
                window_states = outcome.qss_detected
                                    ? prog.captured
                                    : std::vector<CanonicalState>(prog.window.begin(), prog.window.end());
                if (!outcome.qss_detected) {
                    st.status = "not-detected";
                    st.detail = "fit uses the final window";
                } else {
                    st.detail = "t_qss=" + format_double(*prog.qss_time);
                }
                qj["free_system"] = false;
                qj["detected"] = outcome.qss_detected;
                qj["qss_time"] = prog.qss_time ? json(*prog.qss_time) : json(nullptr);
                qj["qss_time_dynamical"] =
                    prog.qss_time ? json(*prog.qss_time / wb.dynamical_time) : json(nullptr);
                qj["first_stationary_window"] = prog.first_time ? json(*prog.first_time) : json(nullptr);
                double lowest = std::numeric_limits<double>::infinity();
                std::size_t run = 0, best_run = 0;
                json hist = json::array();
                for (const auto& [t, m] : prog.history) {
                    hist.push_back(json::array({t, m}));
                    lowest = std::min(lowest, m);
                    run = m < cfg.analysis.qss_threshold ? run + 1 : 0;
                    best_run = std::max(best_run, run);
                }
                qj["min_window_metric"] = prog.history.empty() ? json(nullptr) : json(lowest);
                qj["longest_stationary_run"] = best_run;
                qj["history"] = hist;
                json times = json::array();
                for (const auto& s : window_states) times.push_back(s.t);
                qj["analysis_window_times"] = times;
                double max_f = 0.0;
                std::size_t violations = 0;
                json snaps = json::array();
                for (const auto& s : prog.stats) {
                    max_f = std::max(max_f, s.max_f);
                    const double bound = casimir_bound(wb.eta0, s.min_count);
                    if (s.max_f > bound) ++violations;
                    snaps.push_back(json{{"t", s.t},
                                         {"max_f", s.max_f},
                                         {"min_occupied_count", s.min_count},
                                         {"occupied_bins", s.occupied},
                                         {"out_of_grid_mass", s.out_of_grid},
                                         {"casimir_bound", bound}});
                }
                qj["casimir"] = json{{"eta0", wb.eta0},
                                     {"max_f", max_f},
                                     {"max_f_over_eta0", max_f / wb.eta0},
                                     {"bound_expected", casimir_expected},
                                     {"violations", violations},
                                     {"snapshots", snaps}};
                write_json(rec.path("qss.json").string(), qj);
                rec.emitted("qss.json");
                if (window_states.empty()) throw NumericalError("no snapshots available for analysis");
            });

            CoarseGrainedDistribution avg;
            MeanFieldPotential mf;
            EnergyTable table;
            TwoStepFit fit;
            rec.stage("fit", [&](StageStatus& st) {
                std::vector<CoarseGrainedDistribution> dists;
                std::vector<MeanFieldPotential> fields;
                for (const auto& s : window_states) {
                    dists.push_back(coarse_grain(s, grid, M));
                    fields.push_back(mean_field_potential(dists.back(), pot));
                }
                avg = average_distribution(dists);
                mf = MeanFieldPotential::average(fields);
                write_mean_field_csv(rec.path("mean_field.csv").string(), mf);
                rec.emitted("mean_field.csv");
                write_distribution_csv(rec.path("distribution.csv").string(), avg);
                rec.emitted("distribution.csv");
                table = energy_marginal(avg, mf, M, cfg.fit.n_energy_bins);
                write_energy_table_csv(rec.path("energy_table.csv").string(), table);
                rec.emitted("energy_table.csv");
                fit = fit_two_step(table, wb.eta0, cfg.fit.constrain, cfg.fit.model_selection_margin, ic.threads);
                json fj;
                fj["schema"] = "qss fit v1";
                fj["eta0"] = wb.eta0;
                fj["particle_mass"] = M.value();
                fj["fit"] = to_json(fit);
                try {
                    const auto fermi = fit_fermi(table);
                    fj["fermi"] = json{{"eta", fermi.eta},
                                       {"mu", fermi.mu},
                                       {"temperature", fermi.temperature},
                                       {"residual", fermi.residual}};
                } catch (const NumericalError&) {
                    fj["fermi"] = nullptr;
                }
                fj["grid"] = to_json(grid);
                write_json(rec.path("fit.json").string(), fj);
                rec.emitted("fit.json");
                st.detail = "verdict=" + to_string(fit.verdict);
            });

            rec.stage("time_gauge", [&](StageStatus& st) {
                const auto decomp = decompose_components(fit, grid, mf, M);
                const LapseSampling sampling{cfg.gauge.samples_per_axis, cfg.gauge.sample_time};
                const auto report =
                    diluted_lapse(decomp, cfg.gauge_field(), omega, sampling, cfg.analysis.discrepancy_tol, M);
                json dj;
                dj["schema"] = "qss diluted_time v1";
                dj["fit_verdict"] = to_string(fit.verdict);
                dj["gauge"] = gauge_json(cfg);
                const json summary = to_json(report);
                for (const auto& [k, v] : summary.items()) dj[k] = v;
                write_json(rec.path("diluted_time.json").string(), dj);
                rec.emitted("diluted_time.json");
                write_discrepancy_csv(rec.path("discrepancy_field.csv").string(), report, decomp);
                rec.emitted("discrepancy_field.csv");
                st.detail = std::string("verdict=") + (report.inequivalent ? "inequivalent" : "equivalent");
            });
        }
    } catch (const std::exception& e) {
        outcome.exit_code = exit_code_for(e);
        outcome.error = e.what();
        rec.say(std::string("error: ") + e.what());
    }
    outcome.stages = rec.stages();
    rec.write_manifest(cfg, opts, outcome);
    return outcome;
}

int cmd_run(const std::string& config_path, const std::vector<std::string>& overrides, bool resume,
            std::ostream& out, std::ostream& err) {
    ExperimentConfig cfg;
    try {
        cfg = ExperimentConfig::load(config_path, overrides);
    } catch (const std::exception& e) {
        err << "config error: " << e.what() << '\n';
        return exit_code_for(e);
    }
    RunOptions opts;
    opts.resume = resume;
    opts.config_path = config_path;
    opts.log = &out;
    RunOutcome r;
    try {
        r = run_pipeline(cfg, opts);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_code_for(e);
    }
    for (const auto& n : r.notices) out << "notice: " << n << '\n';
    if (r.exit_code != 0) {
        err << "run failed: " << r.error << '\n';
        return r.exit_code;
    }
    out << "energy drift " << format_double(r.energy_drift) << ", momentum drift " << format_double(r.momentum_drift)
        << '\n';
    out << "QSS " << (r.qss_detected ? "detected at t = " + format_double(r.qss_time.value_or(0.0)) : "not detected")
        << '\n';
    out << "artifacts in " << r.directory << '\n';
    return 0;
}

// ---------------------------------------------------------------------------

int cmd_fit(const std::string& csv_path, const FitOptions& opts, std::ostream& out, std::ostream& err) {
    try {
        const auto table = read_energy_table_csv(csv_path);
        double eta0 = 0.0;
        if (opts.eta0) {
            eta0 = *opts.eta0;
        } else {
            for (const auto& r : table.rows)
                if (!r.missing()) eta0 = std::max(eta0, r.f_mean);
        }
        const auto fit = fit_two_step(table, eta0, opts.constrain, opts.margin);
        json j;
        j["schema"] = "qss fit v1";
        j["eta0"] = eta0;
        j["fit"] = to_json(fit);
        out << "verdict: " << to_string(fit.verdict) << '\n';
        out << "single step: eta=" << format_double(fit.single.eta) << " ef=" << format_double(fit.single.ef)
            << " residual=" << format_double(fit.single.residual) << '\n';
        out << "two step: eta1=" << format_double(fit.eta1) << " ef1=" << format_double(fit.ef1)
            << " eta2=" << format_double(fit.eta2) << " ef2=" << format_double(fit.ef2)
            << " residual=" << format_double(fit.residual) << '\n';
        if (opts.output) {
            write_json(*opts.output, j);
            out << "fit written to " << *opts.output << '\n';
        } else {
            out << j.dump(2) << '\n';
        }
        return 0;
    } catch (const std::exception& e) {
        err << "fit error: " << e.what() << '\n';
        return exit_code_for(e);
    }
}

// ---------------------------------------------------------------------------

namespace {

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const {
        const auto it = std::find(header.begin(), header.end(), name);
        return it == header.end() ? -1 : static_cast<int>(it - header.begin());
    }
};

CsvTable read_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw MissingArtifact("missing '" + path.string() + "'");
    CsvTable t;
    std::string line;
    auto split = [](const std::string& s) {
        std::vector<std::string> cells;
        std::stringstream ss(s);
        std::string c;
        while (std::getline(ss, c, ',')) cells.push_back(c);
        return cells;
    };
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (t.header.empty())
            t.header = split(line);
        else
            t.rows.push_back(split(line));
    }
    if (t.header.empty()) throw SchemaError("'" + path.string() + "' has no header row");
    return t;
}

double cell(const std::vector<std::string>& row, int c) {
    if (c < 0 || static_cast<std::size_t>(c) >= row.size()) return std::numeric_limits<double>::quiet_NaN();
    try {
        return std::stod(row[static_cast<std::size_t>(c)]);
    } catch (...) {
        return std::numeric_limits<double>::quiet_NaN();
    }
}

const std::vector<std::string> kRunArtifacts = {"config.ini",       "conservation.csv", "qss.json",
                                                "mean_field.csv",   "distribution.csv", "energy_table.csv",
                                                "fit.json",         "diluted_time.json", "discrepancy_field.csv"};

}  // namespace

int cmd_report(const std::string& run_dir, std::ostream& out, std::ostream& err) {
    const fs::path dir(run_dir);
    const fs::path manifest_path = dir / "manifest.json";
    if (!fs::exists(manifest_path)) {
        err << "missing artifact: " << manifest_path.string() << '\n';
        std::vector<std::string> present;
        for (const auto& name : kRunArtifacts)
            if (!fs::exists(dir / name)) err << "missing artifact: " << (dir / name).string() << '\n';
        return 4;
    }
    try {
        const json manifest = read_json(manifest_path.string());
        std::vector<std::string> gaps;
        std::map<std::string, std::string> listed;
        for (const auto& o : manifest.value("outputs", json::array()))
            listed[o.at("file").get<std::string>()] = o.at("sha256").get<std::string>();
        for (const auto& [file, digest] : listed) {
            const auto p = dir / file;
            if (!fs::exists(p))
                gaps.push_back(file + ": listed in manifest but missing");
            else if (sha256_file(p.string()) != digest)
                gaps.push_back(file + ": digest differs from manifest");
        }
        for (const auto& name : kRunArtifacts)
            if (!fs::exists(dir / name) && !listed.count(name)) gaps.push_back(name + ": not produced");
        auto have = [&](const std::string& name) { return fs::exists(dir / name); };

        const fs::path rdir = dir / "report";
        fs::create_directories(rdir);
        std::ostringstream s;
        s << "run directory: " << run_dir << '\n';
        s << "code version: " << manifest.value("code_version", std::string("unknown")) << '\n';
        s << "stages:\n";
        for (const auto& st : manifest.value("stages", json::array())) {
            s << "  " << st.value("name", std::string("?")) << ": " << st.value("status", std::string("?"));
            if (st.contains("detail")) s << " (" << st["detail"].get<std::string>() << ")";
            s << '\n';
        }
        for (const auto& n : manifest.value("notices", json::array())) s << "notice: " << n.get<std::string>() << '\n';
        if (manifest.contains("error")) s << "error: " << manifest["error"].get<std::string>() << '\n';

        if (have("conservation.csv")) {
            const auto t = read_csv(dir / "conservation.csv");
            const int ce = t.column("E");
            double e0 = 0.0, drift = 0.0, pdrift = 0.0;
            std::vector<int> pcols;
            for (std::size_t c = 0; c < t.header.size(); ++c)
                if (t.header[c].rfind("P_total_", 0) == 0) pcols.push_back(static_cast<int>(c));
            std::vector<double> p0;
            for (std::size_t i = 0; i < t.rows.size(); ++i) {
                const double e = cell(t.rows[i], ce);
                if (i == 0) {
                    e0 = e;
                    for (int c : pcols) p0.push_back(cell(t.rows[i], c));
                }
                drift = std::max(drift, std::abs(e - e0) / (e0 != 0.0 ? std::abs(e0) : 1.0));
                for (std::size_t k = 0; k < pcols.size(); ++k)
                    pdrift = std::max(pdrift, std::abs(cell(t.rows[i], pcols[k]) - p0[k]));
            }
            s << "energy drift (relative): " << format_double(drift) << '\n';
            s << "momentum drift (absolute): " << format_double(pdrift) << '\n';
        } else {
            s << "energy drift: unavailable (conservation.csv missing)\n";
        }

        // A corrupt artifact becomes a gap rather than aborting the report.
        auto section = [&](const std::string& name, const std::function<void()>& body) {
            try {
                body();
            } catch (const std::exception& e) {
                s << name << ": unreadable\n";
                gaps.push_back(name + ": unreadable (" + e.what() + ")");
            }
        };

        section("qss.json", [&] {
            if (!have("qss.json")) {
                s << "QSS: unavailable (qss.json missing)\n";
                return;
            }
            const auto q = read_json((dir / "qss.json").string());
            if (q.value("free_system", false))
                s << "QSS: trivially stationary (free system)\n";
            else if (q.at("detected").get<bool>())
                s << "QSS: detected at t = " << format_double(q.at("qss_time").get<double>()) << " ("
                  << format_double(q.at("qss_time_dynamical").get<double>()) << " dynamical times)\n";
            else
                s << "QSS: not detected; lowest window metric "
                  << (q.at("min_window_metric").is_null() ? std::string("n/a")
                                                          : format_double(q.at("min_window_metric").get<double>()))
                  << '\n';
            if (q.contains("casimir"))
                s << "max coarse-grained f / eta0: "
                  << format_double(q.at("casimir").at("max_f_over_eta0").get<double>()) << '\n';
        });

        std::optional<TwoStepFit> fit;
        section("fit.json", [&] {
            if (!have("fit.json")) {
                s << "fit: unavailable (fit.json missing)\n";
                return;
            }
            const auto fj = read_json((dir / "fit.json").string());
            fit = two_step_from_json(fj.at("fit"));
            s << "fit verdict: " << to_string(fit->verdict) << '\n';
            s << "  two step: eta1 = " << format_double(fit->eta1) << ", ef1 = " << format_double(fit->ef1)
              << ", eta2 = " << format_double(fit->eta2) << ", ef2 = " << format_double(fit->ef2)
              << ", residual = " << format_double(fit->residual) << '\n';
            s << "  single step: eta = " << format_double(fit->single.eta) << ", ef = " << format_double(fit->single.ef)
              << ", residual = " << format_double(fit->single.residual) << '\n';
        });

        section("diluted_time.json", [&] {
            if (have("diluted_time.json")) {
                const auto dj = read_json((dir / "diluted_time.json").string());
                const bool single = dj.value("fit_verdict", std::string()) == "single" ||
                                    dj.value("overlap_bins", std::size_t{0}) == 0;
                if (single)
                    s << "time gauge: no overlap region; time-reparametrization obstruction absent\n";
                else
                    s << "time gauge: " << dj.at("verdict").get<std::string>() << " (max relative discrepancy "
                      << format_double(dj.at("max_relative_discrepancy").get<double>()) << ", tolerance "
                      << format_double(dj.at("discrepancy_tol").get<double>()) << ")\n";
            } else if (fit && fit->verdict == StepVerdict::single) {
                s << "time gauge: no overlap region; time-reparametrization obstruction absent\n";
            } else {
                s << "time gauge: unavailable (diluted_time.json missing)\n";
            }
        });

        if (have("energy_table.csv")) {
            const auto table = read_energy_table_csv((dir / "energy_table.csv").string());
            std::ofstream st(rdir / "staircase.csv");
            st << "# qss staircase schema v1\n";
            st << "epsilon,f_measured,f_two_step,f_single\n";
            for (const auto& r : table.rows) {
                st << csv_number(r.epsilon) << ',' << csv_number(r.f_mean);
                if (fit) {
                    const double single = r.epsilon < fit->single.ef ? fit->single.eta : 0.0;
                    st << ',' << csv_number(fit->value(r.epsilon)) << ',' << csv_number(single);
                } else {
                    st << ",nan,nan";
                }
                st << '\n';
            }
        } else {
            gaps.push_back("report/staircase.csv: skipped, energy_table.csv missing");
        }

        if (have("discrepancy_field.csv")) {
            const auto t = read_csv(dir / "discrepancy_field.csv");
            std::vector<int> cols;
            std::ofstream dm(rdir / "discrepancy_map.csv");
            dm << "# qss discrepancy_map schema v1\n";
            bool first = true;
            for (std::size_t c = 0; c < t.header.size(); ++c) {
                const auto& h = t.header[c];
                if (h.rfind("q_", 0) == 0 || h.rfind("p_", 0) == 0 || h == "D" || h == "D_relative" || h == "overlap") {
                    cols.push_back(static_cast<int>(c));
                    dm << (first ? "" : ",") << h;
                    first = false;
                }
            }
            dm << '\n';
            for (const auto& row : t.rows) {
                for (std::size_t k = 0; k < cols.size(); ++k)
                    dm << (k ? "," : "") << row.at(static_cast<std::size_t>(cols[k]));
                dm << '\n';
            }
        } else {
            gaps.push_back("report/discrepancy_map.csv: skipped, discrepancy_field.csv missing");
        }

        if (gaps.empty()) {
            s << "gaps: none\n";
        } else {
            s << "gaps:\n";
            for (const auto& g : gaps) s << "  " << g << '\n';
        }
        write_text((rdir / "summary.txt").string(), s.str());
        out << s.str();
        return 0;
    } catch (const std::exception& e) {
        err << "report error: " << e.what() << '\n';
        return exit_code_for(e);
    }
}

// ---------------------------------------------------------------------------

int cmd_sample(const std::string& run_dir, const SampleOptions& opts, std::ostream& out, std::ostream& err) {
    try {
        const fs::path dir(run_dir);
        const auto fj = read_json((dir / "fit.json").string());
        const auto fit = two_step_from_json(fj.at("fit"));
        const SolitonMass M(fj.value("particle_mass", 1.0));
        const auto mf = read_mean_field_csv((dir / "mean_field.csv").string());
        const auto sample = sample_from_qss(fit, mf, M, opts.n, opts.seed);
        const std::string path = opts.output.empty() ? (dir / "samples.csv").string() : opts.output;
        std::ofstream f(path);
        if (!f) throw Error("cannot write '" + path + "'");
        write_snapshot_csv(f, sample.state, true);
        out << "sampled " << sample.state.size() << " particles (acceptance " << format_double(sample.acceptance)
            << ", model mass " << format_double(sample.total_mass) << ", weight "
            << format_double(sample.particle_weight) << ") into " << path << '\n';
        return 0;
    } catch (const std::exception& e) {
        err << "sample error: " << e.what() << '\n';
        return exit_code_for(e);
    }
}

int cmd_gauge_check(const std::string& run_dir, const GaugeCheckOptions& opts, std::ostream& out,
                    std::ostream& err) {
    try {
        const fs::path dir(run_dir);
        if (!fs::exists(dir / "config.ini")) throw MissingArtifact("missing '" + (dir / "config.ini").string() + "'");
        const auto cfg = ExperimentConfig::load((dir / "config.ini").string(), opts.overrides);
        const auto fj = read_json((dir / "fit.json").string());
        const auto fit = two_step_from_json(fj.at("fit"));
        const auto grid = grid_from_json(fj.at("grid"));
        const SolitonMass M(fj.value("particle_mass", 1.0));
        const auto mf = read_mean_field_csv((dir / "mean_field.csv").string());
        const auto decomp = decompose_components(fit, grid, mf, M);
        const auto gauge = cfg.gauge_field();
        const LapseSampling a{cfg.gauge.samples_per_axis, cfg.gauge.sample_time};
        const LapseSampling b{cfg.gauge.samples_per_axis, cfg.gauge.sample_time + opts.offset};
        const auto ra = diluted_lapse(decomp, gauge, grid.omega(), a, cfg.analysis.discrepancy_tol, M);
        const auto rb = diluted_lapse(decomp, gauge, grid.omega(), b, cfg.analysis.discrepancy_tol, M);
        const bool same = proper_time_translation_check(ra, rb);
        double worst = 0.0;
        for (std::size_t i = 0; i < ra.bins.size(); ++i)
            worst = std::max({worst, std::abs(ra.bins[i].dl1 - rb.bins[i].dl1), std::abs(ra.bins[i].dl2 - rb.bins[i].dl2)});
        out << "gauge " << to_string(cfg.gauge.kind) << ", t = " << format_double(a.t) << " vs "
            << format_double(b.t) << ": " << (same ? "identical" : "differs") << " (max |delta dl| "
            << format_double(worst) << " over " << ra.bins.size() << " bins)\n";
        return 0;
    } catch (const std::exception& e) {
        err << "gauge-check error: " << e.what() << '\n';
        return exit_code_for(e);
    }
}

}  // namespace qss
