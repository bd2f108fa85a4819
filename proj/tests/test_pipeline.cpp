#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "qss/config.hpp"
#include "qss/error.hpp"
#include "qss/io.hpp"
#include "qss/pipeline.hpp"

using namespace qss;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("qss_pipeline_" + name)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string sub(const std::string& name) const { return (path / name).string(); }
};

ExperimentConfig small_config(const std::string& dir) {
    auto cfg = ExperimentConfig::load(QSS_SOURCE_DIR "/configs/example.ini");
    cfg.init.n_particles = 600;
    cfg.integrator.duration = 8.0;
    cfg.integrator.snapshot_interval = 1.0;
    cfg.analysis.qss_window = 3;
    cfg.analysis.qss_consecutive = 2;
    cfg.fit.n_energy_bins = 20;
    cfg.grid.omega_factor = 20.0;
    cfg.output.directory = dir;
    return cfg;
}

std::string write_config(const TempDir& tmp, const ExperimentConfig& cfg) {
    const auto path = tmp.sub("config.ini");
    write_text(path, cfg.serialize());
    return path;
}

const StageStatus* stage(const RunOutcome& r, const std::string& name) {
    for (const auto& s : r.stages)
        if (s.name == name) return &s;
    return nullptr;
}

std::string slurp(const fs::path& p) {
    return read_text(p.string());
}

}  // namespace

TEST_SUITE("pipeline") {
    TEST_CASE("full run writes every artifact with matching digests") {
        TempDir tmp("full");
        const auto r = run_pipeline(small_config(tmp.sub("run")));
        REQUIRE(r.exit_code == 0);
        for (const char* name : {"config.ini", "conservation.csv", "qss.json", "mean_field.csv", "distribution.csv",
                                 "energy_table.csv", "fit.json", "diluted_time.json", "discrepancy_field.csv",
                                 "manifest.json"})
            CHECK(fs::exists(fs::path(tmp.sub("run")) / name));
        const auto manifest = read_json(tmp.sub("run") + "/manifest.json");
        CHECK(manifest["exit_code"] == 0);
        CHECK(manifest["seed"] == 42);
        CHECK_FALSE(manifest.contains("started_utc"));
        for (const auto& o : manifest["outputs"]) {
            const auto file = tmp.sub("run") + "/" + o["file"].get<std::string>();
            CHECK(sha256_file(file) == o["sha256"].get<std::string>());
            CHECK(fs::file_size(file) == o["bytes"].get<std::uintmax_t>());
        }
        CHECK(r.energy_drift < 1e-2);
        CHECK(r.momentum_drift < 1e-9);
        const auto fit = read_json(tmp.sub("run") + "/fit.json");
        CHECK(fit["fit"].contains("verdict"));
    }

    TEST_CASE("identical configs give byte-identical artifacts") {
        TempDir tmp("determinism");
        REQUIRE(run_pipeline(small_config(tmp.sub("a"))).exit_code == 0);
        REQUIRE(run_pipeline(small_config(tmp.sub("b"))).exit_code == 0);
        for (const auto& entry : fs::directory_iterator(tmp.sub("a"))) {
            if (!entry.is_regular_file()) continue;
            const auto name = entry.path().filename();
            INFO(name.string());
            CHECK(slurp(entry.path()) == slurp(fs::path(tmp.sub("b")) / name));
        }
    }

    TEST_CASE("resumed run matches an uninterrupted one") {
        TempDir tmp("resume");
        auto cfg = small_config(tmp.sub("whole"));
        cfg.output.snapshots = SnapshotFormat::csv;
        REQUIRE(run_pipeline(cfg).exit_code == 0);

        cfg.output.directory = tmp.sub("split");
        RunOptions halt;
        halt.halt_after_step = 300;
        const auto first = run_pipeline(cfg, halt);
        CHECK(first.exit_code == 1);
        CHECK(fs::exists(fs::path(tmp.sub("split")) / "checkpoint.bin"));
        RunOptions resume;
        resume.resume = true;
        const auto second = run_pipeline(cfg, resume);
        REQUIRE(second.exit_code == 0);
        for (const char* name : {"conservation.csv", "qss.json", "fit.json", "energy_table.csv", "diluted_time.json",
                                 "snapshots.csv"}) {
            INFO(name);
            CHECK(slurp(fs::path(tmp.sub("whole")) / name) == slurp(fs::path(tmp.sub("split")) / name));
        }

        auto other = cfg;
        other.seed = 43;
        RunOptions again;
        again.resume = true;
        again.halt_after_step = 100;
        fs::remove(fs::path(tmp.sub("split")) / "manifest.json");
        CHECK(run_pipeline(cfg, again).exit_code == 0);
        const auto mismatch = run_pipeline(other, again);
        CHECK(mismatch.exit_code == 2);
    }

    TEST_CASE("free system is trivially stationary with a degenerate fit") {
        TempDir tmp("free");
        auto cfg = small_config(tmp.sub("run"));
        cfg.model.coupling = 0.0;
        const auto r = run_pipeline(cfg);
        CHECK(r.exit_code == 0);
        CHECK(r.free_system);
        REQUIRE(stage(r, "fit") != nullptr);
        CHECK(stage(r, "fit")->status == "degenerate");
        bool noticed = false;
        for (const auto& n : r.notices) noticed = noticed || n.find("free-system") != std::string::npos;
        CHECK(noticed);
        CHECK(r.energy_drift <= 1e-12);
    }

    TEST_CASE("grid overflow fails with upstream artifacts kept") {
        TempDir tmp("overflow");
        auto cfg = small_config(tmp.sub("run"));
        cfg.grid.q_extent = 0.5;
        const auto r = run_pipeline(cfg);
        CHECK(r.exit_code == 3);
        CHECK(fs::exists(fs::path(tmp.sub("run")) / "config.ini"));
        CHECK(fs::exists(fs::path(tmp.sub("run")) / "manifest.json"));
        const auto manifest = read_json(tmp.sub("run") + "/manifest.json");
        CHECK(manifest["exit_code"] == 3);
        CHECK(manifest.contains("error"));
        CHECK_FALSE(fs::exists(fs::path(tmp.sub("run")) / "fit.json"));

        std::ostringstream out, err;
        CHECK(cmd_report(tmp.sub("run"), out, err) == 0);
        CHECK(out.str().find("gaps:\n") != std::string::npos);
        CHECK(out.str().find("fit.json: not produced") != std::string::npos);
    }

    TEST_CASE("run command exit codes") {
        TempDir tmp("cmd");
        const auto path = write_config(tmp, small_config(tmp.sub("run")));
        std::ostringstream out, err;
        CHECK(cmd_run(path, {"integrator.dt=-0.1"}, false, out, err) == 2);
        CHECK(err.str().find("integrator.dt") != std::string::npos);
        CHECK(cmd_run(tmp.sub("absent.ini"), {}, false, out, err) == 2);
        CHECK(cmd_run(path, {"init.n_particles=200", "integrator.duration=4"}, false, out, err) == 0);
        CHECK(out.str().find("energy drift") != std::string::npos);
    }

    TEST_CASE("report on complete and missing runs") {
        TempDir tmp("report");
        REQUIRE(run_pipeline(small_config(tmp.sub("run"))).exit_code == 0);
        std::ostringstream out, err;
        CHECK(cmd_report(tmp.sub("run"), out, err) == 0);
        CHECK(out.str().find("gaps: none") != std::string::npos);
        CHECK(out.str().find("fit verdict:") != std::string::npos);
        CHECK(fs::exists(fs::path(tmp.sub("run")) / "report" / "summary.txt"));
        CHECK(fs::exists(fs::path(tmp.sub("run")) / "report" / "staircase.csv"));
        CHECK(fs::exists(fs::path(tmp.sub("run")) / "report" / "discrepancy_map.csv"));
        const auto fit = read_json(tmp.sub("run") + "/fit.json");
        if (fit["fit"]["verdict"] == "single")
            CHECK(out.str().find("no overlap region; time-reparametrization obstruction absent") != std::string::npos);

        write_text(tmp.sub("run") + "/qss.json", "{}\n");
        std::ostringstream out2, err2;
        CHECK(cmd_report(tmp.sub("run"), out2, err2) == 0);
        CHECK(out2.str().find("qss.json: digest differs from manifest") != std::string::npos);

        std::ostringstream out3, err3;
        CHECK(cmd_report(tmp.sub("nowhere"), out3, err3) == 4);
        CHECK(err3.str().find("manifest.json") != std::string::npos);
    }

    TEST_CASE("fit command") {
        TempDir tmp("fit");
        TwoStepFit truth;
        truth.eta1 = 0.6;
        truth.eta2 = 0.4;
        truth.ef1 = -0.5;
        truth.ef2 = 0.2;
        write_energy_table_csv(tmp.sub("two.csv"), synthetic_table(truth, -1.0, 0.1, 20));
        FitOptions opts;
        opts.output = tmp.sub("fit.json");
        std::ostringstream out, err;
        CHECK(cmd_fit(tmp.sub("two.csv"), opts, out, err) == 0);
        CHECK(out.str().find("verdict: two-step") != std::string::npos);
        const auto j = read_json(tmp.sub("fit.json"));
        CHECK(j["fit"]["eta1"].get<double>() == doctest::Approx(0.6).epsilon(1e-12));
        CHECK(j["fit"]["ef2"].get<double>() == doctest::Approx(0.2).epsilon(1e-12));

        TwoStepFit one;
        one.eta1 = 1.0;
        one.ef1 = one.ef2 = 0.3;
        write_energy_table_csv(tmp.sub("one.csv"), synthetic_table(one, -1.0, 0.1, 20));
        std::ostringstream out1, err1;
        CHECK(cmd_fit(tmp.sub("one.csv"), {}, out1, err1) == 0);
        CHECK(out1.str().find("verdict: single") != std::string::npos);

        write_text(tmp.sub("empty.csv"), "epsilon,f_mean,shell_volume,n_bins\n");
        std::ostringstream out2, err2;
        CHECK(cmd_fit(tmp.sub("empty.csv"), {}, out2, err2) == 2);
        std::ostringstream out3, err3;
        CHECK(cmd_fit(tmp.sub("absent.csv"), {}, out3, err3) == 4);
    }

    TEST_CASE("sample and gauge-check commands") {
        TempDir tmp("sample");
        REQUIRE(run_pipeline(small_config(tmp.sub("run"))).exit_code == 0);
        SampleOptions so;
        so.n = 500;
        std::ostringstream out, err;
        CHECK(cmd_sample(tmp.sub("run"), so, out, err) == 0);
        const auto samples = read_snapshot_csv(tmp.sub("run") + "/samples.csv");
        REQUIRE(samples.size() == 1);
        CHECK(samples[0].size() == 500);

        GaugeCheckOptions period;
        period.offset = 2.0 * M_PI / 0.5;
        std::ostringstream g1, e1;
        CHECK(cmd_gauge_check(tmp.sub("run"), period, g1, e1) == 0);
        CHECK(g1.str().find("identical") != std::string::npos);
        GaugeCheckOptions quarter;
        quarter.offset = 0.5 * M_PI / 0.5;
        std::ostringstream g2, e2;
        CHECK(cmd_gauge_check(tmp.sub("run"), quarter, g2, e2) == 0);
        CHECK(g2.str().find("differs") != std::string::npos);

        std::ostringstream g3, e3;
        CHECK(cmd_gauge_check(tmp.sub("missing"), {}, g3, e3) == 4);
    }
}
