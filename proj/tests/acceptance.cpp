// Acceptance checks: one PASS/FAIL line per criterion, exit status 1 if any fail.
#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include "qss/config.hpp"
#include "qss/dynamics.hpp"
#include "qss/error.hpp"
#include "qss/io.hpp"
#include "qss/mu_space.hpp"
#include "qss/pipeline.hpp"
#include "qss/qss_fit.hpp"
#include "qss/time_gauge.hpp"

using namespace qss;
namespace fs = std::filesystem;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string num(double x) {
    std::ostringstream o;
    o.precision(3);
    o << x;
    return o.str();
}

// ||a - b||_inf / ||b||_inf
double snapshot_rel(const std::vector<double>& a, const std::vector<double>& b) {
    double diff = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff = std::max(diff, std::abs(a[i] - b[i]));
        scale = std::max(scale, std::abs(b[i]));
    }
    return scale > 0.0 ? diff / scale : diff;
}

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("qss_acceptance_" + name);
    fs::remove_all(p);
    return p;
}

Waterbag sheet_waterbag(std::size_t n, std::optional<double> virial, std::uint64_t seed = 42) {
    WaterbagInit w;
    w.n_particles = n;
    w.dim = 1;
    w.position_extent = 1.0;
    w.velocity_extent = 1.0;
    w.virial_ratio_target = virial;
    w.seed = seed;
    return init_waterbag(w, SolitonMass(1.0), PairPotential{PotentialKind::sheet1d, 0.0, 1.0 / static_cast<double>(n)});
}

// 1. Energy and momentum conservation, runtime, second-order dt scaling.
Verdict conservation() {
    const std::size_t n = 10000;
    const double duration = 100.0, dt_fraction = 1e-4;
    const auto wb = sheet_waterbag(n, 1.0);
    const PairPotential pot{PotentialKind::sheet1d, 0.0, 1.0 / static_cast<double>(n)};
    auto run = [&](double fraction) {
        IntegratorConfig cfg;
        cfg.dt = fraction * wb.dynamical_time;
        cfg.n_steps = static_cast<std::size_t>(std::llround(duration / fraction));
        cfg.snapshot_stride = static_cast<std::size_t>(std::llround(0.1 / fraction));
        cfg.store_snapshots = false;
        return evolve(wb.state, pot, SolitonMass(1.0), cfg).log;
    };
    const auto start = std::chrono::steady_clock::now();
    const auto fine = run(dt_fraction);
    const double runtime = seconds_since(start);
    const auto coarse = run(2.0 * dt_fraction);
    const double drift = fine.max_energy_drift();
    const double pdrift = fine.max_momentum_drift();
    const double ratio = coarse.max_energy_drift() / drift;
    Verdict v;
    v.pass = drift < 1e-6 && pdrift < 1e-9 && runtime <= 300.0 && std::abs(ratio - 4.0) <= 0.5;
    v.detail = "n=10000, 100 t_dyn, dt=1e-4 t_dyn: energy drift " + num(drift) + " (< 1e-6), momentum drift " +
               num(pdrift) + " (< 1e-9), runtime " + num(runtime) + " s (<= 300), dt-halving drift ratio " +
               num(ratio) + " (4 +/- 0.5)";
    return v;
}

// 2. Zero coupling: every trajectory is a straight line in time.
Verdict free_limit() {
    double worst = 0.0;
    for (auto kind : {PotentialKind::sheet1d, PotentialKind::cosine, PotentialKind::newtonian3d}) {
        const std::size_t dim = kind == PotentialKind::newtonian3d ? 3 : 1;
        WaterbagInit w;
        w.n_particles = 2000;
        w.dim = dim;
        w.seed = 7;
        const PairPotential pot{kind, 0.0, 0.0};
        const auto wb = init_waterbag(w, SolitonMass(1.0), pot);
        IntegratorConfig cfg;
        cfg.dt = 0.01 * wb.dynamical_time;
        cfg.n_steps = 2000;
        cfg.snapshot_stride = 10;
        const auto r = evolve(wb.state, pot, SolitonMass(1.0), cfg);
        for (std::size_t k = 1; k + 1 < r.snapshots.size(); ++k)
            for (std::size_t i = 0; i < wb.state.q.size(); ++i) {
                const double a = r.snapshots[k - 1].q[i], b = r.snapshots[k].q[i], c = r.snapshots[k + 1].q[i];
                worst = std::max(worst, std::abs(a - 2.0 * b + c) / std::max({std::abs(a), std::abs(b), std::abs(c), 1e-300}));
            }
    }
    return {worst <= 1e-12, "sheet1d, cosine and newtonian3d at zero coupling: max relative second difference " +
                                num(worst) + " (<= 1e-12)"};
}

// 3. Constant lapse and constant shift gauges.
Verdict gauge_equivalence() {
    const std::size_t n = 2000;
    const auto wb = sheet_waterbag(n, std::nullopt, 3);
    const PairPotential pot{PotentialKind::sheet1d, 0.0, 1.0 / static_cast<double>(n)};
    const SolitonMass M(1.0);
    IntegratorConfig inertial;
    inertial.dt = 0.01 * wb.dynamical_time;
    inertial.n_steps = 2000;
    inertial.snapshot_stride = 100;
    const auto base = evolve(wb.state, pot, M, inertial);

    double lapse_worst = 0.0;
    for (double n0 : {0.5, 2.0, 4.0}) {
        const auto gauge = GaugeField::constant(n0, {0.0});
        const auto mapped = reparametrize_trajectory(base.snapshots, gauge, M);
        IntegratorConfig scaled = inertial;
        scaled.dt = inertial.dt / n0;
        const auto direct = evolve_in_gauge(wb.state, pot, M, scaled, gauge);
        if (mapped.size() != direct.snapshots.size()) return {false, "snapshot counts differ"};
        for (std::size_t k = 0; k < mapped.size(); ++k) {
            lapse_worst = std::max(lapse_worst, snapshot_rel(mapped[k].q, direct.snapshots[k].q));
            lapse_worst = std::max(lapse_worst, snapshot_rel(mapped[k].p, direct.snapshots[k].p));
        }
    }

    double shift_worst = 0.0;
    for (double v : {0.3, -1.5}) {
        const auto shift = velocity_to_physical_shift(std::vector<double>{v});
        const auto gauged = evolve_in_gauge(wb.state, pot, M, inertial, GaugeField::constant(1.0, shift));
        for (std::size_t k = 0; k < base.snapshots.size(); ++k) {
            auto translated = base.snapshots[k].q;
            for (auto& q : translated) q -= v * base.snapshots[k].t;
            shift_worst = std::max(shift_worst, snapshot_rel(gauged.snapshots[k].q, translated));
            shift_worst = std::max(shift_worst, snapshot_rel(gauged.snapshots[k].p, base.snapshots[k].p));
        }
    }
    return {lapse_worst <= 1e-8 && shift_worst <= 1e-8,
            "lapse N0 in {0.5, 2, 4}: max per-snapshot relative deviation " + num(lapse_worst) +
                "; shift v in {0.3, -1.5} vs inertial - v t: " + num(shift_worst) + " (both <= 1e-8)"};
}

// 4. Coarse-grained density never exceeds the fine-grained density beyond shot noise.
Verdict casimir() {
    auto cfg = ExperimentConfig::load(QSS_SOURCE_DIR "/configs/example.ini");
    const auto dir = scratch("casimir");
    cfg.output.directory = dir.string();
    const auto r = run_pipeline(cfg);
    if (r.exit_code != 0) return {false, "example run failed: " + r.error};
    const auto q = read_json((dir / "qss.json").string());
    const auto& c = q.at("casimir");
    const double eta0 = c.at("eta0").get<double>();
    const double bound = c.at("bound_expected").get<double>();
    double worst = 0.0;
    std::size_t snapshots = 0;
    for (const auto& s : c.at("snapshots")) {
        worst = std::max(worst, s.at("max_f").get<double>());
        ++snapshots;
    }
    fs::remove_all(dir);
    return {snapshots > 0 && worst <= bound,
            "example waterbag run, " + std::to_string(snapshots) + " snapshots: max f / eta0 = " + num(worst / eta0) +
                ", bound (eta0 + 3 sigma) / eta0 = " + num(bound / eta0)};
}

// 5. Waterbag relaxation reaches a stationary coarse-grained state.
Verdict qss_detection() {
    auto cfg = ExperimentConfig::load(QSS_SOURCE_DIR "/configs/example.ini");
    cfg.init.n_particles = 100000;
    cfg.grid.omega_factor = 3200.0;
    cfg.integrator.duration = 100.0;
    cfg.analysis.qss_threshold = 0.02;
    cfg.analysis.qss_consecutive = 5;
    const auto dir = scratch("qss");
    cfg.output.directory = dir.string();
    const auto r = run_pipeline(cfg);
    if (r.exit_code != 0) return {false, "run failed: " + r.error};
    const auto q = read_json((dir / "qss.json").string());
    fs::remove_all(dir);
    const double best = q.at("min_window_metric").is_null() ? NAN : q.at("min_window_metric").get<double>();
    const auto run = q.at("longest_stationary_run").get<std::size_t>();
    const bool detected = q.at("detected").get<bool>();
    std::string detail = "sheet1d waterbag n=" + std::to_string(cfg.init.n_particles) + ", 100 t_dyn: lowest window metric " +
                         num(best) + " (< 0.02), longest stationary run " + std::to_string(run) + " windows (>= 5)";
    if (detected) detail += ", QSS at t = " + num(q.at("qss_time_dynamical").get<double>()) + " t_dyn";
    return {detected && run >= 5, detail};
}

// Harmonic mean field phi = q^2 / 2 on a fine lattice.
MeanFieldPotential harmonic_field(double half, double h) {
    const std::size_t n = static_cast<std::size_t>(std::llround(2.0 * half / h)) + 1;
    std::vector<double> v(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double x = -half + h * static_cast<double>(k);
        v[k] = 0.5 * x * x;
    }
    return MeanFieldPotential({NodeAxis{-half, h, n}}, v);
}

// 6. Step-fit inversion: exact on synthetic tables, 5% on sampled ensembles.
Verdict fit_inversion() {
    const auto start = std::chrono::steady_clock::now();
    double exact_worst = 0.0, exact_residual = 0.0;
    for (const auto& p : std::vector<std::array<double, 4>>{{0.6, 0.4, -0.5, 0.2}, {2.0, 1.0, 0.3, 1.1}, {0.1, 0.9, -2.0, -0.4}}) {
        TwoStepFit truth;
        truth.eta1 = p[0];
        truth.eta2 = p[1];
        truth.ef1 = p[2];
        truth.ef2 = p[3];
        const auto fit = fit_two_step(synthetic_table(truth, -2.5, 0.1, 40), p[0] + p[1], false);
        for (auto [a, b] : {std::pair{fit.eta1, p[0]}, {fit.eta2, p[1]}, {fit.ef1, p[2]}, {fit.ef2, p[3]}})
            exact_worst = std::max(exact_worst, std::abs(a - b) / std::abs(b));
        exact_residual = std::max(exact_residual, fit.residual);
    }

    const auto mf = harmonic_field(2.5, 0.001);
    const SolitonMass M(1.0);
    TwoStepFit truth;
    truth.eta1 = 0.6;
    truth.eta2 = 0.4;
    truth.ef1 = 1.0;
    truth.ef2 = 2.0;
    const auto sample = sample_from_qss(truth, mf, M, 100000, 42);
    const MuGrid grid({UniformAxis{-2.2, 0.05, 88}}, {UniformAxis{-2.2, 0.05, 88}});
    const auto dist = coarse_grain(sample.state, grid, SolitonMass(sample.particle_weight));
    const auto table = energy_marginal(dist, mf, M, 50, EnergyRange{0.0, 2.5});
    const auto fit = fit_two_step(table, 1.0, false);
    double mc_worst = 0.0;
    for (auto [a, b] : {std::pair{fit.eta1, truth.eta1}, {fit.eta2, truth.eta2}, {fit.ef1, truth.ef1}, {fit.ef2, truth.ef2}})
        mc_worst = std::max(mc_worst, std::abs(a - b) / std::abs(b));
    const double runtime = seconds_since(start);
    return {exact_worst <= 1e-12 && exact_residual <= 1e-12 && mc_worst <= 0.05 && runtime <= 60.0,
            "synthetic: max parameter error " + num(exact_worst) + ", residual " + num(exact_residual) +
                "; sampled n=1e5: max relative error " + num(mc_worst) + " (eta1=" + num(fit.eta1) +
                ", eta2=" + num(fit.eta2) + ", ef1=" + num(fit.ef1) + ", ef2=" + num(fit.ef2) + "), runtime " +
                num(runtime) + " s"};
}

// 7. Diluted-lapse arithmetic.
Verdict diluted_lapse_arithmetic() {
    const double eta0 = 2.5;
    const MuGrid grid({UniformAxis{-2.0, 0.25, 16}}, {UniformAxis{-2.0, 0.25, 16}});
    const auto mf = harmonic_field(2.5, 0.001);
    auto make = [&](double a, double b) {
        TwoStepFit f;
        f.eta1 = a;
        f.eta2 = b;
        f.ef1 = 0.5;
        f.ef2 = 1.5;
        f.verdict = StepVerdict::two_step;
        return decompose_components(f, grid, mf, SolitonMass(1.0));
    };
    const double omega = 1.0 / eta0;
    const auto dec = make(0.6 * eta0, 0.4 * eta0);
    const auto rep = diluted_lapse(dec, GaugeField::trivial(1), omega);
    double arith = 0.0;
    std::size_t overlaps = 0;
    for (const auto& b : rep.bins) {
        if (!b.overlap) continue;
        ++overlaps;
        arith = std::max({arith, std::abs(b.dl1 - 0.6), std::abs(b.dl2 - 0.4), std::abs(b.discrepancy - 0.2),
                          std::abs(b.tick_ratio - 2.0 / 3.0)});
    }
    bool ok = overlaps > 0 && arith <= 1e-12 && rep.inequivalent;

    bool covariant = true;
    for (double c : {0.3, 5.0}) {
        const auto scaled = diluted_lapse(dec, GaugeField::constant(c, {0.0}), omega);
        covariant = covariant && scaled.inequivalent == rep.inequivalent &&
                    std::abs(scaled.max_relative_discrepancy - rep.max_relative_discrepancy) <= 1e-12;
    }
    const bool equal = !diluted_lapse(make(0.5 * eta0, 0.5 * eta0), GaugeField::trivial(1), omega).inequivalent;

    const auto periodic = GaugeField::sinusoidal(1, 1.0, 0.2, 0.5, 1.0);
    const double period = 2.0 * M_PI / 0.5;
    const bool translated =
        proper_time_translation_check(diluted_lapse(dec, periodic, omega, {1, 0.3}),
                                      diluted_lapse(dec, periodic, omega, {1, 0.3 + period})) &&
        proper_time_translation_check(diluted_lapse(dec, GaugeField::constant(1.7, {0.0}), omega, {1, 0.0}),
                                      diluted_lapse(dec, GaugeField::constant(1.7, {0.0}), omega, {1, 12.0}));
    ok = ok && covariant && equal && translated;
    return {ok, "D = 0.2 and ratio 2/3 to " + num(arith) + " over " + std::to_string(overlaps) +
                    " overlap bins; lapse covariance " + (covariant ? "holds" : "broken") + "; equal components " +
                    (equal ? "equivalent" : "inequivalent") + "; proper-time translation " +
                    (translated ? "identical" : "differs")};
}

// 8. Two runs of the bundled example produce byte-identical JSON artifacts.
Verdict determinism() {
    std::vector<fs::path> dirs{scratch("det_a"), scratch("det_b")};
    for (const auto& d : dirs) {
        auto cfg = ExperimentConfig::load(QSS_SOURCE_DIR "/configs/example.ini");
        cfg.output.directory = d.string();
        const auto r = run_pipeline(cfg);
        if (r.exit_code != 0) return {false, "example run failed: " + r.error};
    }
    std::size_t compared = 0;
    std::vector<std::string> differing;
    for (const auto& entry : fs::directory_iterator(dirs[0])) {
        if (entry.path().extension() != ".json") continue;
        ++compared;
        const auto other = dirs[1] / entry.path().filename();
        if (!fs::exists(other) || read_text(entry.path().string()) != read_text(other.string()))
            differing.push_back(entry.path().filename().string());
    }
    for (const auto& d : dirs) fs::remove_all(d);
    std::string detail = std::to_string(compared) + " JSON artifacts compared";
    for (const auto& f : differing) detail += ", " + f + " differs";
    return {compared >= 4 && differing.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"qss acceptance checks"};
    std::vector<int> only;
    app.add_option("--only", only, "Criteria to run (default: all)")->check(CLI::Range(1, 8));
    CLI11_PARSE(app, argc, argv);
    const std::set<int> selected(only.begin(), only.end());

    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
        {"conservation", conservation},
        {"free limit", free_limit},
        {"gauge equivalence", gauge_equivalence},
        {"casimir bound", casimir},
        {"qss detection", qss_detection},
        {"fit inversion", fit_inversion},
        {"diluted lapse", diluted_lapse_arithmetic},
        {"determinism", determinism},
    };
    bool all = true;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!selected.empty() && !selected.count(id)) continue;
        Verdict v;
        const auto start = std::chrono::steady_clock::now();
        try {
            v = criteria[i].second();
        } catch (const std::exception& e) {
            v = {false, std::string("error: ") + e.what()};
        }
        all = all && v.pass;
        std::cout << "criterion " << id << " (" << criteria[i].first << "): " << (v.pass ? "PASS" : "FAIL") << " - "
                  << v.detail << " [" << num(seconds_since(start)) << " s]" << std::endl;
    }
    return all ? 0 : 1;
}
