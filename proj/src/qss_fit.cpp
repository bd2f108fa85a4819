#include "qss/qss_fit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "qss/error.hpp"
#include "qss/parallel.hpp"
#include "qss/random.hpp"

namespace qss {

std::string to_string(StepVerdict v) {
    return v == StepVerdict::two_step ? "two-step" : "single";
}

double TwoStepFit::value(double epsilon) const {
    double f = 0.0;
    if (epsilon < ef1) f += eta1;
    if (epsilon < ef2) f += eta2;
    return f;
}

namespace {

// Weighted prefix sums over table rows; missing shells carry zero weight.
struct Prefix {
    std::vector<double> w, wf, wff;
    std::size_t n = 0;

    explicit Prefix(const EnergyTable& table) : n(table.rows.size()) {
        w.assign(n + 1, 0.0);
        wf.assign(n + 1, 0.0);
        wff.assign(n + 1, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const auto& r = table.rows[i];
            double wi = 0.0, fi = 0.0;
            if (!r.missing() && std::isfinite(r.f_mean)) {
                wi = r.shell_volume;
                fi = r.f_mean;
            }
            w[i + 1] = w[i] + wi;
            wf[i + 1] = wf[i] + wi * fi;
            wff[i + 1] = wff[i] + wi * fi * fi;
        }
    }

    double W(std::size_t a, std::size_t b) const { return w[b] - w[a]; }
    double F(std::size_t a, std::size_t b) const { return wf[b] - wf[a]; }
    double G(std::size_t a, std::size_t b) const { return wff[b] - wff[a]; }

    // sum_i w_i (f_i - level)^2 over rows [a, b)
    double rss(std::size_t a, std::size_t b, double level) const {
        return std::max(0.0, G(a, b) - 2.0 * level * F(a, b) + level * level * W(a, b));
    }
};

// Weighted RMS of f minus a piecewise-constant model, summed row by row.
template <class Model>
double direct_residual(const EnergyTable& table, Model level) {
    double rss = 0.0, w = 0.0;
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& r = table.rows[i];
        if (r.missing() || !std::isfinite(r.f_mean)) continue;
        const double d = r.f_mean - level(i);
        rss += r.shell_volume * d * d;
        w += r.shell_volume;
    }
    return std::sqrt(rss / w);
}

void check_table(const EnergyTable& table, std::size_t min_rows) {
    if (table.rows.size() < min_rows)
        throw ConfigError("fit.n_energy_bins", "fit needs at least " + std::to_string(min_rows) + " energy bins");
    if (!(table.width > 0.0) || !std::isfinite(table.lo))
        throw SchemaError("energy table has a non-positive bin width");
    for (const auto& r : table.rows)
        if (!r.missing() && (!(r.f_mean >= 0.0) || !(r.shell_volume > 0.0)))
            throw SchemaError("energy table rows need non-negative f and positive shell volume");
}

double edge(const EnergyTable& table, std::size_t k) {
    return table.lo + table.width * static_cast<double>(k);
}

struct Candidate {
    std::size_t k1 = 0, k2 = 0;
    double a = 0.0, b = 0.0;
    double rss = std::numeric_limits<double>::infinity();
};

// Strictly better under the residual-then-gap-then-position ordering.
bool better(const Candidate& x, const Candidate& y, double tol) {
    if (x.rss < y.rss - tol) return true;
    if (x.rss > y.rss + tol) return false;
    const std::size_t gx = x.k2 - x.k1, gy = y.k2 - y.k1;
    if (gx != gy) return gx < gy;
    return x.k1 < y.k1;
}

}  // namespace

StepFit fit_single_step(const EnergyTable& table, double eta0) {
    check_table(table, 3);
    if (!std::isfinite(eta0) || eta0 < 0.0) throw ConfigError("eta0", "fine-grained density must be non-negative");
    const Prefix ps(table);
    const std::size_t n = ps.n;
    if (!(ps.W(0, n) > 0.0) || !(ps.F(0, n) > 0.0)) throw DegenerateFit("energy table carries no mass");
    const double tol = 1e-12 * ps.G(0, n);

    std::size_t best_k = 0;
    double best_level = 0.0, best_rss = ps.G(0, n);
    for (std::size_t k = 1; k <= n; ++k) {
        const double wa = ps.W(0, k);
        const double level = wa > 0.0 ? ps.F(0, k) / wa : 0.0;
        const double rss = ps.rss(0, k, level) + ps.G(k, n);
        if (rss < best_rss - tol) {
            best_rss = rss;
            best_k = k;
            best_level = level;
        }
    }
    StepFit fit;
    fit.eta = best_level;
    fit.ef = edge(table, best_k);
    fit.residual = direct_residual(table, [&](std::size_t i) { return i < best_k ? best_level : 0.0; });
    return fit;
}

TwoStepFit fit_two_step(const EnergyTable& table, double eta0, bool constrain, double margin, std::size_t threads) {
    check_table(table, 5);
    if (!(margin > 0.0) || margin > 1.0) throw ConfigError("fit.model_selection_margin", "must lie in (0, 1]");
    if (constrain && !(eta0 > 0.0 && std::isfinite(eta0)))
        throw ConstraintInfeasible("constrained fit needs a positive fine-grained density");
    const Prefix ps(table);
    const std::size_t n = ps.n;
    if (!(ps.W(0, n) > 0.0) || !(ps.F(0, n) > 0.0)) throw DegenerateFit("energy table carries no mass");
    const double tol = 1e-12 * ps.G(0, n);

    auto evaluate = [&](std::size_t k1, std::size_t k2) {
        Candidate c;
        c.k1 = k1;
        c.k2 = k2;
        const double wa = ps.W(0, k1), wb = ps.W(k1, k2);
        if (constrain) {
            c.a = eta0;
            c.b = wb > 0.0 ? std::clamp(ps.F(k1, k2) / wb, 0.0, eta0) : 0.0;
        } else {
            c.b = wb > 0.0 ? ps.F(k1, k2) / wb : 0.0;
            c.a = wa > 0.0 ? ps.F(0, k1) / wa : c.b;
            if (c.a < c.b) {
                // core below shoulder would need eta1 < 0: clip to eta1 = 0 and refit
                c.a = c.b = (ps.F(0, k2)) / (wa + wb);
            }
        }
        c.rss = ps.rss(0, k1, c.a) + ps.rss(k1, k2, c.b) + ps.G(k2, n);
        return c;
    };

    const std::size_t blocks = std::min<std::size_t>(n + 1, 16);
    std::vector<Candidate> best(blocks);
    parallel_blocks(blocks, std::max<std::size_t>(1, threads), [&](std::size_t blk) {
        const std::size_t lo = (n + 1) * blk / blocks, hi = (n + 1) * (blk + 1) / blocks;
        Candidate local;
        for (std::size_t k1 = lo; k1 < hi; ++k1)
            for (std::size_t k2 = k1; k2 <= n; ++k2) {
                const Candidate c = evaluate(k1, k2);
                if (better(c, local, tol)) local = c;
            }
        best[blk] = local;
    });
    Candidate winner;
    for (const auto& c : best)
        if (better(c, winner, tol)) winner = c;

    TwoStepFit fit;
    fit.constrained = constrain;
    fit.margin = margin;
    fit.eta1 = winner.a - winner.b;
    fit.eta2 = winner.b;
    fit.ef1 = edge(table, winner.k1);
    fit.ef2 = edge(table, winner.k2);
    fit.residual = direct_residual(
        table, [&](std::size_t i) { return i < winner.k1 ? winner.a : (i < winner.k2 ? winner.b : 0.0); });
    fit.single = fit_single_step(table, eta0);
    const bool distinct = fit.eta1 > 0.0 && fit.eta2 > 0.0 && winner.k2 > winner.k1;
    fit.verdict = distinct && fit.residual < margin * fit.single.residual ? StepVerdict::two_step : StepVerdict::single;
    return fit;
}

EnergyTable synthetic_table(const TwoStepFit& model, double lo, double width, std::size_t bins, double shell_volume) {
    if (!(width > 0.0) || bins == 0) throw ConfigError("table", "need a positive width and at least one bin");
    EnergyTable table;
    table.lo = lo;
    table.width = width;
    table.rows.resize(bins);
    for (std::size_t i = 0; i < bins; ++i) {
        auto& r = table.rows[i];
        r.epsilon = lo + width * (static_cast<double>(i) + 0.5);
        r.f_mean = model.value(r.epsilon);
        r.n_bins = 1;
        r.shell_volume = shell_volume;
    }
    return table;
}

QssSample sample_from_qss(const TwoStepFit& fit, const MeanFieldPotential& mf, SolitonMass M, std::size_t n,
                          std::uint64_t seed) {
    const std::size_t D = mf.dim();
    if (D == 0) throw ConfigError("mean_field", "empty mean-field lattice");
    if (fit.eta1 < 0.0 || fit.eta2 < 0.0 || fit.ef1 > fit.ef2) throw ConfigError("fit", "invalid step parameters");
    QssSample out;
    out.state = CanonicalState(D, n);

    double top = -std::numeric_limits<double>::infinity();
    if (fit.eta1 > 0.0) top = std::max(top, fit.ef1);
    if (fit.eta2 > 0.0) top = std::max(top, fit.ef2);
    const double phi_min = mf.min_value();
    const double peak = fit.peak();
    if (!(peak > 0.0) || !(top > phi_min))
        throw NumericalError("zero acceptance region: no phase-space point lies below the Fermi energies");
    const double p_max = std::sqrt(2.0 * M.value() * (top - phi_min));
    double volume = 1.0;
    for (const auto& ax : mf.axes()) volume *= (ax.last() - ax.origin) * 2.0 * p_max;

    std::mt19937_64 rng(seed);
    std::vector<double> q(D), p(D);
    std::size_t accepted = 0;
    std::uint64_t trials = 0;
    const std::uint64_t max_trials = 10000ull * static_cast<std::uint64_t>(n) + 1000000ull;
    while (accepted < n) {
        if (++trials > max_trials)
            throw NumericalError("rejection sampling accepted too few points; acceptance region is vanishingly small");
        double p2 = 0.0;
        for (std::size_t d = 0; d < D; ++d) {
            const auto& ax = mf.axes()[d];
            q[d] = ax.origin + (ax.last() - ax.origin) * unit_uniform(rng);
            p[d] = p_max * (2.0 * unit_uniform(rng) - 1.0);
            p2 += p[d] * p[d];
        }
        const double eps = p2 / (2.0 * M.value()) + mf.evaluate(q);
        const double u = unit_uniform(rng);
        if (u * peak >= fit.value(eps)) continue;
        std::copy(q.begin(), q.end(), out.state.q.begin() + static_cast<std::ptrdiff_t>(accepted * D));
        std::copy(p.begin(), p.end(), out.state.p.begin() + static_cast<std::ptrdiff_t>(accepted * D));
        ++accepted;
    }
    if (n > 0) {
        out.acceptance = static_cast<double>(accepted) / static_cast<double>(trials);
        out.total_mass = volume * peak * out.acceptance;
        out.particle_weight = out.total_mass / static_cast<double>(n);
    }
    return out;
}

FermiFit fit_fermi(const EnergyTable& table) {
    check_table(table, 3);
    const Prefix ps(table);
    const std::size_t n = ps.n;
    if (!(ps.F(0, n) > 0.0)) throw DegenerateFit("energy table carries no mass");
    FermiFit best;
    best.residual = std::numeric_limits<double>::infinity();
    const double ladder[] = {0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0};
    for (std::size_t k = 0; k <= n; ++k) {
        const double mu = edge(table, k);
        for (double scale : ladder) {
            const double temp = scale * table.width;
            double sfg = 0.0, sgg = 0.0;
            for (const auto& r : table.rows) {
                if (r.missing()) continue;
                const double g = 1.0 / (1.0 + std::exp((r.epsilon - mu) / temp));
                sfg += r.shell_volume * r.f_mean * g;
                sgg += r.shell_volume * g * g;
            }
            if (!(sgg > 0.0)) continue;
            const double eta = sfg / sgg;
            double rss = 0.0;
            for (const auto& r : table.rows) {
                if (r.missing()) continue;
                const double g = 1.0 / (1.0 + std::exp((r.epsilon - mu) / temp));
                rss += r.shell_volume * (r.f_mean - eta * g) * (r.f_mean - eta * g);
            }
            const double res = std::sqrt(rss / ps.W(0, n));
            if (res < best.residual) best = FermiFit{eta, mu, temp, res};
        }
    }
    return best;
}

}  // namespace qss
