#include "qss/dynamics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include "qss/parallel.hpp"
#include "qss/random.hpp"

namespace qss {

void IntegratorConfig::validate() const {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("integrator.dt", "time step must be positive and finite");
    if (n_steps == 0) throw ConfigError("integrator.n_steps", "at least one step is required");
    if (snapshot_stride == 0) throw ConfigError("integrator.snapshot_stride", "stride must be positive");
    if (snapshot_stride > n_steps)
        throw ConfigError("integrator.snapshot_stride", "stride must not exceed the number of steps");
    if (threads == 0) throw ConfigError("integrator.threads", "thread count must be positive");
}

std::string to_string(WaterbagSampling s) {
    return s == WaterbagSampling::quiet ? "quiet" : "uniform";
}

WaterbagSampling waterbag_sampling_from_string(const std::string& name) {
    if (name == "uniform") return WaterbagSampling::uniform;
    if (name == "quiet") return WaterbagSampling::quiet;
    throw ConfigError("init.sampling", "unknown sampling '" + name + "' (expected uniform or quiet)");
}

void WaterbagInit::validate() const {
    if (n_particles < 2) throw ConfigError("init.n_particles", "need at least two particles");
    if (dim < 1 || dim > 3) throw ConfigError("init.dim", "dimension must be 1, 2 or 3");
    if (!(position_extent > 0.0) || !std::isfinite(position_extent))
        throw ConfigError("init.position_extent", "must be positive and finite");
    if (!(velocity_extent >= 0.0) || !std::isfinite(velocity_extent))
        throw ConfigError("init.velocity_extent", "must be non-negative and finite");
    if (virial_ratio_target && (!(*virial_ratio_target > 0.0) || !std::isfinite(*virial_ratio_target)))
        throw ConfigError("init.virial_ratio", "target must be positive and finite");
}

namespace {

double radical_inverse(std::uint64_t index, unsigned base) {
    double inv = 1.0 / base, scale = inv, value = 0.0;
    while (index > 0) {
        value += static_cast<double>(index % base) * scale;
        index /= base;
        scale *= inv;
    }
    return value;
}

constexpr unsigned kHaltonBases[6] = {2, 3, 5, 7, 11, 13};

// Fills `count` points of the unit hypercube of dimension 2 * dim.
std::vector<double> unit_points(std::size_t count, std::size_t dim, WaterbagSampling sampling, std::uint64_t seed) {
    const std::size_t k = 2 * dim;
    std::vector<double> u(count * k);
    std::mt19937_64 rng(seed);
    if (sampling == WaterbagSampling::uniform) {
        for (double& x : u) x = unit_uniform(rng);
        return u;
    }
    std::vector<double> offset(k);
    for (double& o : offset) o = unit_uniform(rng);
    for (std::size_t i = 0; i < count; ++i)
        for (std::size_t c = 0; c < k; ++c) {
            double x = radical_inverse(i + 1, kHaltonBases[c]) + offset[c];
            u[i * k + c] = x - std::floor(x);
        }
    return u;
}

double virial_sum(const CanonicalState& state, const std::vector<double>& force) {
    double w = 0.0;
    for (std::size_t k = 0; k < state.q.size(); ++k) w += state.q[k] * force[k];
    return w;
}

double velocity_dispersion(const CanonicalState& state, SolitonMass M) {
    const std::size_t n = state.size(), D = state.dim;
    if (n == 0) return 0.0;
    double var = 0.0;
    for (std::size_t d = 0; d < D; ++d) {
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += state.p[i * D + d];
        mean /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double dv = state.p[i * D + d] - mean;
            var += dv * dv;
        }
    }
    return std::sqrt(var / static_cast<double>(n * D)) / M.value();
}

void check_finite(const CanonicalState& state) {
    for (std::size_t k = 0; k < state.q.size(); ++k) {
        if (!std::isfinite(state.q[k]) || !std::isfinite(state.p[k]))
            throw NumericalError("non-finite phase-space coordinate for particle " + std::to_string(k / state.dim) +
                                 " at t = " + std::to_string(state.t));
    }
}

}  // namespace

Waterbag init_waterbag(const WaterbagInit& cfg, SolitonMass M, const PairPotential& pot) {
    cfg.validate();
    pot.validate();
    const std::size_t n = cfg.n_particles, D = cfg.dim;
    const double a = cfg.position_extent, b = cfg.velocity_extent;

    Waterbag bag;
    bag.state = CanonicalState(D, n);
    const std::size_t independent = cfg.symmetric ? n / 2 : n;
    const auto u = unit_points(independent, D, cfg.sampling, cfg.seed);
    auto place = [&](std::size_t slot, std::size_t src, double sign) {
        for (std::size_t d = 0; d < D; ++d) {
            bag.state.q[slot * D + d] = sign * a * (2.0 * u[src * 2 * D + d] - 1.0);
            bag.state.p[slot * D + d] = sign * M.value() * b * (2.0 * u[src * 2 * D + D + d] - 1.0);
        }
    };
    if (cfg.symmetric) {
        for (std::size_t k = 0; k < independent; ++k) {
            place(2 * k, k, 1.0);
            place(2 * k + 1, k, -1.0);
        }
        // an odd particle out sits at rest at the centre
    } else {
        for (std::size_t k = 0; k < n; ++k) place(k, k, 1.0);
    }

    const auto force = forces(bag.state, pot);
    const double w = std::abs(virial_sum(bag.state, force));
    double veff = b;
    if (cfg.virial_ratio_target) {
        const double k2 = 2.0 * kinetic_energy(bag.state, M);
        if (!(k2 > 0.0))
            throw ConfigError("init.virial_ratio", "cannot reach a virial ratio without initial velocities");
        if (!(w > 0.0))
            throw ConfigError("init.virial_ratio", "cannot reach a virial ratio in a force-free configuration");
        const double lambda = std::sqrt(*cfg.virial_ratio_target * w / k2);
        for (double& x : bag.state.p) x *= lambda;
        veff = b * lambda;
    }

    bag.position_extent = a;
    bag.velocity_extent = veff;
    bag.virial_ratio = virial_ratio(bag.state, force, M);
    const double volume = std::pow(2.0 * a, static_cast<double>(D)) *
                          std::pow(2.0 * M.value() * veff, static_cast<double>(D));
    bag.eta0 = volume > 0.0 ? static_cast<double>(n) * M.value() / volume : 0.0;

    double sigma = velocity_dispersion(bag.state, M);
    if (!(sigma > 0.0) && n > 0) sigma = std::sqrt(w / (static_cast<double>(n * D) * M.value()));
    bag.dynamical_time = sigma > 0.0 ? 2.0 * a / sigma : 2.0 * a;
    return bag;
}

// ---------------------------------------------------------------------------
// Forces

ForceEvaluator::ForceEvaluator(PairPotential pot, std::size_t threads) : pot_(pot), threads_(std::max<std::size_t>(1, threads)) {
    pot_.validate();
}

void ForceEvaluator::compute(const CanonicalState& state, std::vector<double>& out) {
    if (state.dim > 3) throw ConfigError("dim", "at most three spatial dimensions are supported");
    out.assign(state.q.size(), 0.0);
    if (state.size() < 2 || pot_.coupling == 0.0) return;
    if (state.dim == 1 && pot_.kind == PotentialKind::sheet1d) return sheet_1d(state, out);
    if (state.dim == 1 && pot_.kind == PotentialKind::cosine) return cosine_1d(state, out);
    direct(state, out);
}

void ForceEvaluator::sheet_1d(const CanonicalState& state, std::vector<double>& out) {
    const std::size_t n = state.size();
    const auto& q = state.q;
    auto by_position = [](const SortKey& x, const SortKey& y) { return x.q < y.q; };
    if (sorted_.size() != n) {
        sorted_.resize(n);
        for (std::size_t i = 0; i < n; ++i) sorted_[i] = SortKey{q[i], i};
        std::sort(sorted_.begin(), sorted_.end(), by_position);
    } else {
        for (auto& key : sorted_) key.q = q[key.index];
        // After one time step the previous order is nearly sorted; give insertion
        // sort a bounded budget before falling back to a full sort.
        std::size_t moves = 0;
        const std::size_t budget = 16 * n;
        for (std::size_t i = 1; i < n && moves <= budget; ++i) {
            const SortKey key = sorted_[i];
            std::size_t j = i;
            while (j > 0 && sorted_[j - 1].q > key.q) {
                sorted_[j] = sorted_[j - 1];
                --j;
            }
            moves += i - j;
            sorted_[j] = key;
        }
        if (moves > budget) std::sort(sorted_.begin(), sorted_.end(), by_position);
    }
    const double c = pot_.coupling;
    std::size_t g0 = 0;
    while (g0 < n) {
        std::size_t g1 = g0 + 1;
        while (g1 < n && sorted_[g1].q == sorted_[g0].q) ++g1;
        const double f = c * (static_cast<double>(n - g1) - static_cast<double>(g0));
        for (std::size_t k = g0; k < g1; ++k) out[sorted_[k].index] = f;
        g0 = g1;
    }
}

void ForceEvaluator::cosine_1d(const CanonicalState& state, std::vector<double>& out) {
    const std::size_t n = state.size();
    std::vector<double> s(n), co(n);
    double C = 0.0, S = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        s[i] = std::sin(state.q[i]);
        co[i] = std::cos(state.q[i]);
        C += co[i];
        S += s[i];
    }
    for (std::size_t i = 0; i < n; ++i) {
        // exclude the self term explicitly so coincident pairs cancel exactly
        const double Ci = C - co[i], Si = S - s[i];
        out[i] = -pot_.coupling * (s[i] * Ci - co[i] * Si);
    }
}

void ForceEvaluator::direct(const CanonicalState& state, std::vector<double>& out) const {
    const std::size_t n = state.size(), D = state.dim;
    constexpr std::size_t kBlocks = 32;
    const std::size_t blocks = std::min(kBlocks, n);
    const double* q = state.q.data();
    parallel_blocks(blocks, threads_, [&](std::size_t b) {
        const std::size_t lo = n * b / blocks, hi = n * (b + 1) / blocks;
        double dx[3];
        for (std::size_t i = lo; i < hi; ++i) {
            double acc[3] = {0.0, 0.0, 0.0};
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                double r2 = 0.0;
                for (std::size_t d = 0; d < D; ++d) {
                    dx[d] = q[i * D + d] - q[j * D + d];
                    r2 += dx[d] * dx[d];
                }
                const double f = pair_force_factor(pot_, std::sqrt(r2));
                for (std::size_t d = 0; d < D; ++d) acc[d] += f * dx[d];
            }
            for (std::size_t d = 0; d < D; ++d) out[i * D + d] = acc[d];
        }
    });
}

std::vector<double> forces(const CanonicalState& state, const PairPotential& pot) {
    ForceEvaluator eval(pot);
    std::vector<double> out;
    eval.compute(state, out);
    return out;
}

std::vector<double> forces_direct(const CanonicalState& state, const PairPotential& pot, std::size_t threads) {
    pot.validate();
    if (state.dim > 3) throw ConfigError("dim", "at most three spatial dimensions are supported");
    std::vector<double> out(state.q.size(), 0.0);
    const std::size_t n = state.size(), D = state.dim;
    const std::size_t blocks = std::min<std::size_t>(32, n);
    parallel_blocks(blocks, std::max<std::size_t>(1, threads), [&](std::size_t b) {
        const std::size_t lo = n * b / blocks, hi = n * (b + 1) / blocks;
        for (std::size_t i = lo; i < hi; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                double r2 = 0.0;
                for (std::size_t d = 0; d < D; ++d) {
                    const double dx = state.q[i * D + d] - state.q[j * D + d];
                    r2 += dx * dx;
                }
                const double f = pair_force_factor(pot, std::sqrt(r2));
                for (std::size_t d = 0; d < D; ++d) out[i * D + d] += f * (state.q[i * D + d] - state.q[j * D + d]);
            }
    });
    return out;
}

double virial_ratio(const CanonicalState& state, const std::vector<double>& force, SolitonMass M) {
    const double w = std::abs(virial_sum(state, force));
    if (w == 0.0) return 0.0;
    return 2.0 * kinetic_energy(state, M) / w;
}

// ---------------------------------------------------------------------------
// Integration

LeapfrogIntegrator::LeapfrogIntegrator(PairPotential pot, SolitonMass M, std::size_t threads)
    : eval_(pot, threads), mass_(M) {}

LeapfrogIntegrator::LeapfrogIntegrator(PairPotential pot, SolitonMass M, const GaugeField& gauge, std::size_t threads)
    : eval_(pot, threads), mass_(M) {
    if (!gauge.is_constant())
        throw ConfigError("gauge", "the integrator supports constant lapse and shift only");
    lapse_ = gauge.constant_lapse();
    shift_ = gauge.constant_shift();
    if (!(lapse_ > 0.0)) throw NumericalError("lapse must be strictly positive");
}

const std::vector<double>& LeapfrogIntegrator::current_forces(const CanonicalState& state) {
    if (!cached_ || force_.size() != state.q.size()) {
        eval_.compute(state, force_);
        cached_ = true;
    }
    return force_;
}

void LeapfrogIntegrator::step(CanonicalState& state, double dt) {
    const std::size_t D = state.dim;
    if (!shift_.empty() && shift_.size() != D) throw ConfigError("gauge.shift", "shift and state differ in dimension");
    current_forces(state);
    const double half = 0.5 * dt * lapse_;
    const double drift = dt * lapse_ / mass_.value();
    for (std::size_t k = 0; k < state.p.size(); ++k) state.p[k] += half * force_[k];
    for (std::size_t k = 0; k < state.q.size(); ++k) state.q[k] += drift * state.p[k];
    if (!shift_.empty())
        for (std::size_t k = 0; k < state.q.size(); ++k) state.q[k] += dt * shift_[k % D];
    eval_.compute(state, force_);
    for (std::size_t k = 0; k < state.p.size(); ++k) state.p[k] += half * force_[k];
    state.t += dt;
    check_finite(state);
}

CanonicalState step_leapfrog(const CanonicalState& state, const PairPotential& pot, SolitonMass M, double dt) {
    state.validate();
    if (!std::isfinite(dt)) throw ConfigError("dt", "time step must be finite");
    LeapfrogIntegrator integ(pot, M);
    CanonicalState next = state;
    integ.step(next, dt);
    return next;
}

double ConservationLog::max_energy_drift() const {
    if (records.empty()) return 0.0;
    const double e0 = records.front().energy;
    const double scale = e0 != 0.0 ? std::abs(e0) : 1.0;
    double worst = 0.0;
    for (const auto& r : records) worst = std::max(worst, std::abs(r.energy - e0) / scale);
    return worst;
}

double ConservationLog::max_momentum_drift() const {
    if (records.empty()) return 0.0;
    const auto& p0 = records.front().momentum;
    double worst = 0.0;
    for (const auto& r : records)
        for (std::size_t d = 0; d < p0.size(); ++d) worst = std::max(worst, std::abs(r.momentum[d] - p0[d]));
    return worst;
}

namespace {

EvolveResult run(CanonicalState state, const PairPotential& pot, SolitonMass M, const IntegratorConfig& cfg,
                 LeapfrogIntegrator& integ, const SnapshotObserver& observer) {
    cfg.validate();
    state.validate();
    const auto start = std::chrono::steady_clock::now();
    EvolveResult result;

    auto record = [&](std::size_t step) {
        const auto& f = integ.current_forces(state);
        ConservationRecord rec;
        rec.t = state.t;
        rec.energy = kinetic_energy(state, M) + potential_energy(state, pot);
        rec.momentum = total_momentum(state);
        rec.virial = virial_ratio(state, f, M);
        rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        result.log.records.push_back(std::move(rec));
        if (cfg.store_snapshots) result.snapshots.push_back(state);
        if (observer) observer(state, step);
    };

    record(0);
    for (std::size_t s = 1; s <= cfg.n_steps; ++s) {
        try {
            integ.step(state, cfg.dt);
        } catch (const NumericalError& e) {
            throw EvolveAborted(std::string("integration aborted at step ") + std::to_string(s) + ": " + e.what(),
                                std::move(result.log));
        }
        if (s % cfg.snapshot_stride == 0 || s == cfg.n_steps) record(s);
    }
    result.final_state = std::move(state);
    return result;
}

}  // namespace

EvolveResult evolve(CanonicalState state, const PairPotential& pot, SolitonMass M, const IntegratorConfig& cfg,
                    const SnapshotObserver& observer) {
    LeapfrogIntegrator integ(pot, M, cfg.threads);
    return run(std::move(state), pot, M, cfg, integ, observer);
}

EvolveResult evolve_in_gauge(CanonicalState state, const PairPotential& pot, SolitonMass M,
                             const IntegratorConfig& cfg, const GaugeField& gauge, const SnapshotObserver& observer) {
    if (gauge.dim() != state.dim) throw ConfigError("gauge", "gauge dimension differs from state dimension");
    LeapfrogIntegrator integ(pot, M, gauge, cfg.threads);
    return run(std::move(state), pot, M, cfg, integ, observer);
}

std::vector<CanonicalState> reparametrize_trajectory(const std::vector<CanonicalState>& snapshots,
                                                     const GaugeField& gauge, SolitonMass M) {
    if (!gauge.is_constant())
        throw ConfigError("gauge", "trajectory reparametrization requires a constant lapse and shift");
    const double n0 = gauge.constant_lapse();
    const auto& s = gauge.constant_shift();
    std::vector<CanonicalState> out;
    out.reserve(snapshots.size());
    std::vector<double> qdot;
    for (const auto& snap : snapshots) {
        if (snap.dim != s.size()) throw ConfigError("gauge.shift", "shift and snapshot differ in dimension");
        CanonicalState g = snap;
        g.t = snap.t / n0;
        const std::size_t D = snap.dim;
        qdot.resize(D);
        for (std::size_t i = 0; i < snap.size(); ++i) {
            for (std::size_t d = 0; d < D; ++d) {
                g.q[i * D + d] = snap.q[i * D + d] + s[d] * g.t;
                qdot[d] = n0 * snap.p[i * D + d] / M.value() + s[d];
            }
            const auto p = canonical_momentum(qdot, n0, s, M);
            std::copy(p.begin(), p.end(), g.p.begin() + static_cast<std::ptrdiff_t>(i * D));
        }
        out.push_back(std::move(g));
    }
    return out;
}

}  // namespace qss
