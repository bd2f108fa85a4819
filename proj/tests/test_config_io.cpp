#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "qss/config.hpp"
#include "qss/error.hpp"
#include "qss/io.hpp"

using namespace qss;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("qss_test_" + name)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

EnergyTable parse_table(const std::string& text) {
    std::istringstream in(text);
    return parse_energy_table_csv(in);
}

}  // namespace

TEST_SUITE("config_io") {
    TEST_CASE("config round trip through canonical text") {
        const auto cfg = ExperimentConfig::load(QSS_SOURCE_DIR "/configs/example.ini");
        const auto text = cfg.serialize();
        const auto again = ExperimentConfig::parse(text);
        CHECK(again.serialize() == text);
        CHECK(again.seed == 42);
        CHECK(again.init.n_particles == 4000);
        CHECK(again.gauge.kind == GaugeKind::sinusoidal);
        CHECK(again.analysis.qss_consecutive == 5);

        auto tweaked = cfg;
        tweaked.integrator.dt = 0.1 + 0.2;
        tweaked.gauge.shift = {0.5};
        const auto back = ExperimentConfig::parse(tweaked.serialize());
        CHECK(*back.integrator.dt == *tweaked.integrator.dt);
        CHECK(back.gauge.shift == tweaked.gauge.shift);
    }

    TEST_CASE("invalid values name the field and line") {
        const std::string text = "seed = 1\n[integrator]\ndt = -0.5\n";
        try {
            ExperimentConfig::parse(text);
            FAIL("negative dt accepted");
        } catch (const ConfigError& e) {
            CHECK(e.field() == "integrator.dt");
            CHECK(e.line() == 3);
            CHECK(std::string(e.what()).find("integrator.dt") != std::string::npos);
        }
        CHECK_THROWS_AS(ExperimentConfig::parse("[model]\ncoupling = abc\n"), ConfigError);
        CHECK_THROWS_AS(ExperimentConfig::parse("[integrator]\ndt = nan\n"), ConfigError);
        CHECK_THROWS_AS(ExperimentConfig::parse("[init]\nn_particles = 1\n"), ConfigError);
    }

    TEST_CASE("unknown, duplicate and malformed entries") {
        try {
            ExperimentConfig::parse("[model]\ncouplng = 1\n");
            FAIL("unknown key accepted");
        } catch (const ConfigError& e) {
            CHECK(e.field() == "model.couplng");
            CHECK(e.line() == 2);
        }
        CHECK_THROWS_AS(ExperimentConfig::parse("[model]\ncoupling = 1\ncoupling = 2\n"), ConfigError);
        CHECK_THROWS_AS(ExperimentConfig::parse("[model\n"), ConfigError);
        CHECK_THROWS_AS(ExperimentConfig::parse("[model]\njust text\n"), ConfigError);
        CHECK_THROWS_AS(ExperimentConfig::load("/nonexistent/qss.ini"), ConfigError);
    }

    TEST_CASE("command-line overrides win") {
        const auto cfg = ExperimentConfig::load(QSS_SOURCE_DIR "/configs/example.ini",
                                                {"model.coupling=0", "init.n_particles=64", "seed=7"});
        CHECK(cfg.model.coupling == 0.0);
        CHECK(cfg.init.n_particles == 64);
        CHECK(cfg.seed == 7);
        CHECK_THROWS_AS(ExperimentConfig::load(QSS_SOURCE_DIR "/configs/example.ini", {"nonsense"}), ConfigError);
        CHECK_THROWS_AS(ExperimentConfig::load(QSS_SOURCE_DIR "/configs/example.ini", {"model.nope=1"}), ConfigError);
    }

    TEST_CASE("energy table csv round trip") {
        TempDir dir("energy");
        EnergyTable t;
        t.lo = -1.25;
        t.width = 0.1 + 0.2;
        for (std::size_t i = 0; i < 6; ++i) {
            EnergyShell s;
            s.epsilon = t.lo + t.width * (static_cast<double>(i) + 0.5);
            s.f_mean = i == 3 ? std::nan("") : 1.0 / (1.0 + static_cast<double>(i));
            s.shell_volume = i == 3 ? 0.0 : 0.7 * static_cast<double>(i + 1);
            s.n_bins = i == 3 ? 0 : i + 2;
            t.rows.push_back(s);
        }
        write_energy_table_csv(dir.file("e.csv"), t);
        const auto back = read_energy_table_csv(dir.file("e.csv"));
        CHECK(back.lo == t.lo);
        CHECK(back.width == t.width);
        REQUIRE(back.rows.size() == t.rows.size());
        for (std::size_t i = 0; i < t.rows.size(); ++i) {
            CHECK(back.rows[i].epsilon == t.rows[i].epsilon);
            CHECK(back.rows[i].n_bins == t.rows[i].n_bins);
            CHECK(back.rows[i].shell_volume == t.rows[i].shell_volume);
            if (i != 3) CHECK(back.rows[i].f_mean == t.rows[i].f_mean);
        }
    }

    TEST_CASE("energy table schema errors") {
        CHECK_THROWS_AS(parse_table(""), SchemaError);
        CHECK_THROWS_AS(parse_table("epsilon,f_mean,shell_volume,n_bins\n"), SchemaError);
        try {
            parse_table("epsilon,shell_volume,n_bins\n0.5,1,1\n");
            FAIL("missing column accepted");
        } catch (const SchemaError& e) {
            CHECK(std::string(e.what()).find("f_mean") != std::string::npos);
        }
        CHECK_THROWS_AS(parse_table("epsilon,f_mean,shell_volume,n_bins\n0.5,abc,1,1\n1.5,1,1,1\n"), SchemaError);
        CHECK_THROWS_AS(parse_table("epsilon,f_mean,shell_volume,n_bins\n0.5,1,1,1\n1.5,1,1,1\n3.5,1,1,1\n"), SchemaError);
        CHECK_THROWS_AS(parse_table("epsilon,f_mean,shell_volume,n_bins\n0.5,1,1,1.5\n1.5,1,1,1\n"), SchemaError);
        const auto ok = parse_table("epsilon,f_mean,shell_volume,n_bins\n0.5,1,1,1\n1.5,0.5,1,1\n2.5,0,1,1\n");
        CHECK(ok.lo == doctest::Approx(0.0));
        CHECK(ok.width == doctest::Approx(1.0));
        CHECK_THROWS_AS(read_energy_table_csv("/nonexistent/table.csv"), MissingArtifact);
    }

    TEST_CASE("snapshot csv and binary round trips") {
        TempDir dir("snap");
        auto a = test::random_state(17, 3, 2.0, 1.0, 4);
        a.t = 0.1 + 0.2;
        auto b = test::random_state(17, 3, 2.0, 1.0, 5);
        b.t = 1.0 / 3.0;
        {
            std::ofstream out(dir.file("s.csv"));
            write_snapshot_csv(out, a, true);
            write_snapshot_csv(out, b, false);
        }
        const auto csv = read_snapshot_csv(dir.file("s.csv"));
        REQUIRE(csv.size() == 2);
        CHECK(csv[0].q == a.q);
        CHECK(csv[0].p == a.p);
        CHECK(csv[0].t == a.t);
        CHECK(csv[1].q == b.q);
        CHECK(csv[1].t == b.t);
        {
            std::ofstream out(dir.file("s.bin"), std::ios::binary);
            write_snapshot_binary(out, a);
            write_snapshot_binary(out, b);
        }
        const auto bin = read_snapshot_binary_file(dir.file("s.bin"));
        REQUIRE(bin.size() == 2);
        CHECK(bin[0].q == a.q);
        CHECK(bin[1].p == b.p);
        CHECK(bin[1].dim == 3);
        std::istringstream garbage("not a snapshot");
        CHECK_THROWS_AS(read_snapshot_binary(garbage), SchemaError);
    }

    TEST_CASE("mean-field csv is exact") {
        TempDir dir("mf");
        std::vector<double> v(9);
        for (std::size_t k = 0; k < v.size(); ++k) v[k] = std::sin(0.3 * static_cast<double>(k)) / 7.0;
        const MeanFieldPotential mf({NodeAxis{-0.4, 0.1, 9}}, v);
        write_mean_field_csv(dir.file("mf.csv"), mf);
        const auto back = read_mean_field_csv(dir.file("mf.csv"));
        CHECK(back.values() == mf.values());
        const std::vector<double> x{0.123};
        CHECK(back.evaluate(x) == mf.evaluate(x));
    }

    TEST_CASE("json round trips") {
        const auto grid = MuGrid::with_omega(1, 0.01, 0.5, 3.0, 2.0);
        const auto g2 = grid_from_json(to_json(grid));
        CHECK(g2.omega() == grid.omega());
        CHECK(g2.bin_count() == grid.bin_count());
        CHECK(g2.q_axes()[0].lo == grid.q_axes()[0].lo);
        CHECK(g2.p_axes()[0].width == grid.p_axes()[0].width);

        TwoStepFit fit;
        fit.eta1 = 0.1 + 0.2;
        fit.eta2 = 1.0 / 3.0;
        fit.ef1 = -0.7;
        fit.ef2 = 0.25;
        fit.residual = 1e-3;
        fit.verdict = StepVerdict::two_step;
        fit.single.eta = 0.5;
        fit.single.ef = 0.1;
        fit.single.residual = 0.2;
        const auto back = two_step_from_json(json::parse(to_json(fit).dump()));
        CHECK(back.eta1 == fit.eta1);
        CHECK(back.eta2 == fit.eta2);
        CHECK(back.ef1 == fit.ef1);
        CHECK(back.ef2 == fit.ef2);
        CHECK(back.verdict == fit.verdict);
        CHECK(back.single.eta == fit.single.eta);
        CHECK_THROWS_AS(two_step_from_json(json::object()), SchemaError);
    }

    TEST_CASE("file digests") {
        TempDir dir("sha");
        write_text(dir.file("abc.txt"), "abc");
        CHECK(sha256_file(dir.file("abc.txt")) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        write_text(dir.file("empty.txt"), "");
        CHECK(sha256_file(dir.file("empty.txt")) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
        CHECK_THROWS_AS(sha256_file(dir.file("missing")), MissingArtifact);
        CHECK(format_double(0.1) == "0.1");
        CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
    }
}
