#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "qss/dynamics.hpp"
#include "qss/error.hpp"
#include "qss/mu_space.hpp"

using namespace qss;

namespace {

MuGrid grid_1d(double qlo, double qw, std::size_t nq, double plo, double pw, std::size_t np) {
    return MuGrid({UniformAxis{qlo, qw, nq}}, {UniformAxis{plo, pw, np}});
}

CoarseGrainedDistribution manual(const MuGrid& grid, std::vector<double> f) {
    CoarseGrainedDistribution d;
    d.grid = grid;
    d.f = std::move(f);
    d.counts.assign(d.f.size(), 0);
    for (double v : d.f) d.total_mass += v * grid.omega();
    return d;
}

// Independent composite-Simpson integral of c * rho(y) |x - y| for a piecewise
// constant line density rho.
double slab_quadrature(double x, double c, const std::vector<double>& rho_edges, const std::vector<double>& rho) {
    double total = 0.0;
    for (std::size_t k = 0; k < rho.size(); ++k) {
        const double a = rho_edges[k], b = rho_edges[k + 1];
        auto integrate = [&](double lo, double hi) {
            const int n = 2000;
            const double h = (hi - lo) / n;
            double s = std::abs(x - lo) + std::abs(x - hi);
            for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * std::abs(x - (lo + i * h));
            return s * h / 3.0;
        };
        // split at x so the integrand is smooth on each piece
        if (x > a && x < b)
            total += rho[k] * (integrate(a, x) + integrate(x, b));
        else
            total += rho[k] * integrate(a, b);
    }
    return c * total;
}

}  // namespace

TEST_SUITE("mu_space") {
    TEST_CASE("grid geometry") {
        const auto g = MuGrid::with_omega(1, 0.04, 2.0, 1.0, 1.0);
        CHECK(g.omega() == doctest::Approx(0.04));
        CHECK(g.q_axes()[0].width / g.p_axes()[0].width == doctest::Approx(2.0));
        CHECK(g.q_axes()[0].lo <= -1.0);
        CHECK(g.q_axes()[0].hi() >= 1.0);
        const auto e = g.q_edges(0);
        for (std::size_t i = 1; i < e.size(); ++i) CHECK(e[i] > e[i - 1]);
        const auto d = default_grid(1, 250.0, 1.0, 1.0, 2.0, 3.0, 6.0);
        CHECK(d.omega() == doctest::Approx(1.0 / 250.0));
        CHECK(d.q_axes()[0].width / d.p_axes()[0].width == doctest::Approx(0.5));
    }

    TEST_CASE("single occupied bin") {
        const auto g = grid_1d(-0.5, 0.5, 2, -0.5, 0.5, 2);
        CanonicalState s(1, 1);
        s.q = {0.1};
        s.p = {0.2};
        const auto d = coarse_grain(s, g, SolitonMass(1.0));
        CHECK(g.omega() == 0.25);
        const auto bin = *g.locate(s.q, s.p);
        for (std::size_t b = 0; b < d.f.size(); ++b) CHECK(d.f[b] == (b == bin ? 4.0 : 0.0));
    }

    TEST_CASE("empty state") {
        const auto g = grid_1d(-1, 0.5, 4, -1, 0.5, 4);
        CanonicalState s(1, 0);
        const auto d = coarse_grain(s, g, SolitonMass(1.0));
        for (double v : d.f) CHECK(v == 0.0);
        CHECK(d.total_mass == 0.0);
    }

    TEST_CASE("mass is conserved by histogramming") {
        const auto s = test::random_state(5000, 1, 1.0, 1.0, 3);
        const auto g = grid_1d(-1.0, 0.1, 20, -1.0, 0.125, 16);
        const SolitonMass M(0.3);
        const auto d = coarse_grain(s, g, M);
        double mass = 0.0;
        std::uint64_t count = 0;
        for (std::size_t b = 0; b < d.f.size(); ++b) {
            mass += d.f[b] * g.omega();
            count += d.counts[b];
        }
        CHECK(count == 5000);
        CHECK(std::abs(mass - 5000 * 0.3) <= 1e-12 * 1500.0);
    }

    TEST_CASE("uniform waterbag gives eta0 within shot noise") {
        WaterbagInit w;
        w.n_particles = 200000;
        w.seed = 4;
        const PairPotential pot{PotentialKind::sheet1d, 0.0, 1.0 / 200000};
        const auto wb = init_waterbag(w, SolitonMass(1.0), pot);
        const auto g = grid_1d(-1.0, 0.25, 8, -1.0, 0.25, 8);
        const auto d = coarse_grain(wb.state, g, SolitonMass(1.0));
        for (std::size_t b = 0; b < d.f.size(); ++b) {
            REQUIRE(d.counts[b] > 0);
            CHECK(std::abs(d.f[b] - wb.eta0) <= 3.0 * wb.eta0 / std::sqrt(static_cast<double>(d.counts[b])));
        }
        CHECK(d.max_f() <= casimir_bound(wb.eta0, d.min_occupied_count()));
    }

    TEST_CASE("too much mass outside the grid") {
        const auto s = test::random_state(1000, 1, 2.0, 1.0, 5);
        CHECK_THROWS_AS(coarse_grain(s, grid_1d(-1, 0.5, 4, -1, 0.5, 4), SolitonMass(1.0)), OutOfGrid);
    }

    TEST_CASE("point mass field") {
        const PairPotential pot{PotentialKind::newtonian3d, 0.01, 1.0};
        const std::vector<UniformAxis> q(3, UniformAxis{-1.5, 1.0, 3});
        const std::vector<UniformAxis> p(3, UniformAxis{-0.5, 1.0, 1});
        const MuGrid g(q, p);
        CanonicalState s(3, 1);
        const auto d = coarse_grain(s, g, SolitonMass(1.0));
        const auto mf = mean_field_potential(d, pot);
        CHECK(mf.evaluate(std::vector<double>{1.0, 0.0, 0.0}) == doctest::Approx(-1.0 / std::sqrt(1.0001)).epsilon(1e-12));
        CHECK(mf.evaluate(std::vector<double>{0.0, -1.0, 0.0}) == doctest::Approx(-1.0 / std::sqrt(1.0001)).epsilon(1e-12));
        const PairPotential bare{PotentialKind::newtonian3d, 0.0, 1.0};
        CHECK_THROWS_AS(mean_field_potential(d, bare), SingularEvaluation);
    }

    TEST_CASE("uniform sheet slab has a quadratic potential inside") {
        const double c = 0.7;
        const auto g = grid_1d(-2.0, 0.25, 16, -0.5, 1.0, 1);
        std::vector<double> f(g.bin_count(), 0.0);
        const double eta = 3.0;
        for (std::size_t k = 4; k < 12; ++k) f[k] = eta;  // q in [-1, 1]
        const auto d = manual(g, f);
        const auto mf = mean_field_potential(d, PairPotential{PotentialKind::sheet1d, 0.0, c});
        // line density: eta * (p width) per unit length, counted in condensates (M = 1)
        const std::vector<double> edges{-1.0, 1.0};
        const std::vector<double> rho{eta * 1.0};
        double worst_quad = 0.0, worst_poly = 0.0;
        for (double x = -1.0; x <= 1.0; x += 0.125) {
            const double v = mf.evaluate(std::vector<double>{x});
            worst_quad = std::max(worst_quad, std::abs(v - slab_quadrature(x, c, edges, rho)));
            worst_poly = std::max(worst_poly, std::abs(v - c * rho[0] * (x * x + 1.0)));
        }
        CHECK(worst_quad <= 1e-6);
        CHECK(worst_poly <= 1e-12);
    }

    TEST_CASE("mean field of a zero distribution vanishes and is linear") {
        const auto g = grid_1d(-1.0, 0.25, 8, -1.0, 0.5, 4);
        const PairPotential pot{PotentialKind::cosine, 0.0, 0.4};
        const auto zero = mean_field_potential(manual(g, std::vector<double>(g.bin_count(), 0.0)), pot);
        for (double v : zero.values()) CHECK(v == 0.0);

        std::mt19937_64 rng(3);
        std::vector<double> f1(g.bin_count()), f2(g.bin_count()), f12(g.bin_count());
        for (std::size_t b = 0; b < f1.size(); ++b) {
            f1[b] = unit_uniform(rng);
            f2[b] = unit_uniform(rng);
            f12[b] = f1[b] + f2[b];
        }
        for (const auto& k : {pot, PairPotential{PotentialKind::sheet1d, 0.0, 1.0}}) {
            const auto a = mean_field_potential(manual(g, f1), k);
            const auto b = mean_field_potential(manual(g, f2), k);
            const auto ab = mean_field_potential(manual(g, f12), k);
            for (std::size_t i = 0; i < ab.values().size(); ++i)
                CHECK(std::abs(ab.values()[i] - a.values()[i] - b.values()[i]) <= 1e-12 * std::max(1.0, std::abs(ab.values()[i])));
        }
    }

    TEST_CASE("energy marginal of step distributions") {
        // harmonic mean field phi = q^2 / 2 on a fine lattice
        const auto g = grid_1d(-2.0, 0.05, 80, -2.0, 0.05, 80);
        const auto nodes = mean_field_nodes(g);
        std::vector<double> phi(nodes[0].count);
        for (std::size_t k = 0; k < phi.size(); ++k) phi[k] = 0.5 * nodes[0].position(k) * nodes[0].position(k);
        const MeanFieldPotential mf(nodes, phi);
        const SolitonMass M(1.0);
        auto eps = [&](std::size_t b) {
            const auto c = g.center(b);
            return 0.5 * c[1] * c[1] + mf.evaluate(std::vector<double>{c[0]});
        };
        const EnergyRange range{0.0, 2.0};

        SUBCASE("single step") {
            std::vector<double> f(g.bin_count());
            for (std::size_t b = 0; b < f.size(); ++b) f[b] = eps(b) < 1.0 ? 5.0 : 0.0;
            const auto t = energy_marginal(manual(g, f), mf, M, 20, range);
            for (const auto& r : t.rows) {
                if (r.missing()) continue;
                if (r.epsilon + 0.5 * t.width <= 1.0) CHECK(r.f_mean == doctest::Approx(5.0));
                if (r.epsilon - 0.5 * t.width >= 1.0) CHECK(r.f_mean == 0.0);
            }
        }
        SUBCASE("two step plateaus") {
            std::vector<double> f(g.bin_count());
            for (std::size_t b = 0; b < f.size(); ++b) f[b] = (eps(b) < 0.5 ? 0.6 : 0.0) + (eps(b) < 1.2 ? 0.4 : 0.0);
            const auto t = energy_marginal(manual(g, f), mf, M, 20, range);
            for (const auto& r : t.rows) {
                if (r.missing()) continue;
                if (r.epsilon + 0.5 * t.width <= 0.5) CHECK(r.f_mean == doctest::Approx(1.0));
                if (r.epsilon - 0.5 * t.width >= 0.5 && r.epsilon + 0.5 * t.width <= 1.2) CHECK(r.f_mean == doctest::Approx(0.4));
                if (r.epsilon - 0.5 * t.width >= 1.2) CHECK(r.f_mean == 0.0);
            }
        }
        SUBCASE("uniform f is flat and empty shells are missing") {
            const auto t = energy_marginal(manual(g, std::vector<double>(g.bin_count(), 2.0)), mf, M, 40,
                                           EnergyRange{-1.0, 3.0});
            std::size_t missing = 0;
            for (const auto& r : t.rows) {
                if (r.missing()) {
                    ++missing;
                    CHECK(std::isnan(r.f_mean));
                } else {
                    CHECK(r.f_mean == doctest::Approx(2.0));
                }
            }
            CHECK(missing >= 10);  // energies below zero hold no bins
        }
    }

    TEST_CASE("stationarity metric") {
        const auto g = grid_1d(-1, 0.5, 4, -1, 0.5, 4);
        const auto s = test::random_state(300, 1, 1.0, 1.0, 8);
        const auto d = coarse_grain(s, g, SolitonMass(1.0));
        CHECK(stationarity_metric(d, d) == 0.0);
        CanonicalState a(1, 1), b(1, 1);
        a.q = {-0.9};
        b.q = {0.9};
        CHECK(stationarity_metric(coarse_grain(a, g, SolitonMass(1.0)), coarse_grain(b, g, SolitonMass(1.0))) ==
              doctest::Approx(2.0));
        const auto other = grid_1d(-1, 0.25, 8, -1, 0.5, 4);
        CHECK_THROWS_AS(stationarity_metric(d, coarse_grain(s, other, SolitonMass(1.0))), GridMismatch);
    }

    TEST_CASE("detector windows") {
        const auto g = grid_1d(-1, 0.5, 4, -1, 0.5, 4);
        const auto s = test::random_state(300, 1, 1.0, 1.0, 8);
        QssDetector det(0.02, 3);
        auto d = coarse_grain(s, g, SolitonMass(1.0));
        CHECK_FALSE(det.push(d));
        CHECK_FALSE(det.push(d));
        CHECK(det.push(d));
        CHECK(det.consecutive() == 1);
        CHECK(det.first_converged_time().has_value());
        auto moved = s;
        for (auto& q : moved.q) q = -q * 0.5;
        CHECK_FALSE(det.push(coarse_grain(moved, g, SolitonMass(1.0))));
        CHECK(det.consecutive() == 0);
        CHECK(det.history().size() == 2);
    }

    TEST_CASE("casimir bounds") {
        CHECK(casimir_bound(2.0, 9) == doctest::Approx(4.0));
        CHECK(casimir_bound_expected(100.0, 0.25, SolitonMass(1.0)) == doctest::Approx(160.0));
    }
}
