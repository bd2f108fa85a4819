#include "qss/time_gauge.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>

#include "qss/error.hpp"

namespace qss {

std::size_t ComponentDecomposition::overlap_count() const {
    return static_cast<std::size_t>(std::count(overlap.begin(), overlap.end(), true));
}

std::size_t ComponentDecomposition::occupied_count() const {
    std::size_t c = 0;
    for (std::size_t b = 0; b < f1.size(); ++b)
        if (f1[b] > 0.0 || f2[b] > 0.0) ++c;
    return c;
}

ComponentDecomposition decompose_components(const TwoStepFit& fit, const MuGrid& grid, const MeanFieldPotential& mf,
                                            SolitonMass M) {
    const std::size_t D = grid.dim();
    if (mf.dim() != D) throw GridMismatch("mean field and grid differ in dimension");
    ComponentDecomposition dec;
    dec.grid = grid;
    dec.verdict = fit.verdict;
    const std::size_t n = grid.bin_count();
    dec.f1.assign(n, 0.0);
    dec.f2.assign(n, 0.0);
    dec.epsilon.assign(n, 0.0);
    dec.overlap.assign(n, false);

    const std::size_t nq = grid.q_bin_count(), np = n / nq;
    std::vector<double> phi(nq), kin(np), x(D);
    for (std::size_t k = 0; k < nq; ++k) {
        const auto c = grid.center(k * np);
        std::copy(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(D), x.begin());
        if (!mf.contains(x)) throw GridMismatch("mean-field lattice does not cover the grid");
        phi[k] = mf.evaluate(x);
    }
    for (std::size_t j = 0; j < np; ++j) {
        const auto c = grid.center(j);
        double p2 = 0.0;
        for (std::size_t d = 0; d < D; ++d) p2 += c[D + d] * c[D + d];
        kin[j] = p2 / (2.0 * M.value());
    }

    const bool two = fit.verdict == StepVerdict::two_step;
    for (std::size_t b = 0; b < n; ++b) {
        const double eps = phi[b / np] + kin[b % np];
        dec.epsilon[b] = eps;
        if (two) {
            dec.f1[b] = eps < fit.ef1 ? fit.eta1 : 0.0;
            dec.f2[b] = eps < fit.ef2 ? fit.eta2 : 0.0;
        } else {
            dec.f1[b] = eps < fit.single.ef ? fit.single.eta : 0.0;
        }
        dec.overlap[b] = dec.f1[b] > 0.0 && dec.f2[b] > 0.0;
    }
    return dec;
}

std::vector<Occupancy> bin_occupancy(const ComponentDecomposition& decomp, double omega, SolitonMass M) {
    if (!(omega > 0.0)) throw ConfigError("grid.omega", "bin volume must be positive");
    std::vector<Occupancy> out(decomp.f1.size());
    for (std::size_t b = 0; b < out.size(); ++b) {
        // nearbyint under the default rounding mode rounds half-way cases to even
        out[b].nu1 = static_cast<std::int64_t>(std::nearbyint(decomp.f1[b] * omega / M.value()));
        out[b].nu2 = static_cast<std::int64_t>(std::nearbyint(decomp.f2[b] * omega / M.value()));
    }
    return out;
}

namespace {

// Lapse at the bin centre plus the spread over a stratified in-bin lattice.
std::pair<double, double> sample_lapse(const GaugeField& gauge, const MuGrid& grid, std::size_t bin,
                                       const LapseSampling& sampling) {
    const std::size_t D = grid.dim();
    const auto idx = grid.unflatten(bin);
    std::vector<double> x(D);
    for (std::size_t d = 0; d < D; ++d) x[d] = grid.q_axes()[d].center(idx[d]);
    const double centre = gauge.lapse(x, sampling.t);
    if (sampling.samples_per_axis <= 1) return {centre, 0.0};
    const std::size_t k = sampling.samples_per_axis;
    std::size_t total = 1;
    for (std::size_t d = 0; d < D; ++d) total *= k;
    double lo = centre, hi = centre;
    for (std::size_t s = 0; s < total; ++s) {
        std::size_t rest = s;
        for (std::size_t d = 0; d < D; ++d) {
            const auto& ax = grid.q_axes()[d];
            const double frac = (static_cast<double>(rest % k) + 0.5) / static_cast<double>(k);
            rest /= k;
            x[d] = ax.edge(idx[d]) + frac * ax.width;
        }
        const double v = gauge.lapse(x, sampling.t);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    return {centre, hi - lo};
}

}  // namespace

DilutedTimeReport diluted_lapse(const ComponentDecomposition& decomp, const GaugeField& gauge, double omega,
                                const LapseSampling& sampling, double tolerance, SolitonMass M) {
    if (!(omega > 0.0)) throw ConfigError("grid.omega", "bin volume must be positive");
    if (!(tolerance > 0.0)) throw ConfigError("gauge.discrepancy_tol", "tolerance must be positive");
    if (gauge.dim() != decomp.grid.dim()) throw ConfigError("gauge", "gauge dimension differs from grid dimension");
    const auto occ = bin_occupancy(decomp, omega, M);

    DilutedTimeReport rep;
    rep.omega = omega;
    rep.tolerance = tolerance;
    std::size_t overlap = 0;
    for (std::size_t b = 0; b < decomp.f1.size(); ++b) {
        if (!(decomp.f1[b] > 0.0 || decomp.f2[b] > 0.0)) continue;
        DilutedBin r;
        r.bin = b;
        r.nu1 = occ[b].nu1;
        r.nu2 = occ[b].nu2;
        std::tie(r.lapse, r.lapse_spread) = sample_lapse(gauge, decomp.grid, b, sampling);
        r.dl1 = decomp.f1[b] * omega * r.lapse;
        r.dl2 = decomp.f2[b] * omega * r.lapse;
        r.discrepancy = std::abs(r.dl1 - r.dl2);
        r.relative_discrepancy = r.discrepancy / (r.dl1 + r.dl2);
        r.overlap = decomp.overlap[b];
        r.tick_ratio = r.overlap ? decomp.f2[b] / decomp.f1[b] : std::numeric_limits<double>::quiet_NaN();
        if (r.overlap) {
            ++overlap;
            rep.max_discrepancy = std::max(rep.max_discrepancy, r.discrepancy);
            rep.max_relative_discrepancy = std::max(rep.max_relative_discrepancy, r.relative_discrepancy);
        }
        rep.bins.push_back(r);
    }
    rep.overlap_fraction = rep.bins.empty() ? 0.0 : static_cast<double>(overlap) / static_cast<double>(rep.bins.size());
    rep.inequivalent = rep.max_relative_discrepancy > tolerance;
    return rep;
}

bool proper_time_translation_check(const DilutedTimeReport& a, const DilutedTimeReport& b) {
    if (a.bins.size() != b.bins.size() || a.omega != b.omega)
        throw GridMismatch("reports cover different bins");
    auto close = [](double x, double y) {
        return std::abs(x - y) <= 1e-12 * std::max({1.0, std::abs(x), std::abs(y)});
    };
    for (std::size_t i = 0; i < a.bins.size(); ++i) {
        const auto& x = a.bins[i];
        const auto& y = b.bins[i];
        if (x.bin != y.bin) throw GridMismatch("reports cover different bins");
        if (!close(x.dl1, y.dl1) || !close(x.dl2, y.dl2)) return false;
    }
    return true;
}

}  // namespace qss
