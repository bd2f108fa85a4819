#include "qss/mu_space.hpp"

#include <algorithm>
#include <cmath>

#include "qss/error.hpp"

namespace qss {

namespace {

constexpr std::size_t kMaxBins = std::size_t{1} << 27;

void check_axis(const UniformAxis& ax, const char* what) {
    if (ax.bins == 0) throw ConfigError(what, "axis needs at least one bin");
    if (!(ax.width > 0.0) || !std::isfinite(ax.width) || !std::isfinite(ax.lo))
        throw ConfigError(what, "bin width must be positive and finite");
}

}  // namespace

MuGrid::MuGrid(std::vector<UniformAxis> q_axes, std::vector<UniformAxis> p_axes)
    : q_(std::move(q_axes)), p_(std::move(p_axes)) {
    if (q_.empty() || q_.size() != p_.size())
        throw ConfigError("grid", "need one position and one momentum axis per dimension");
    if (q_.size() > 3) throw ConfigError("grid", "at most three spatial dimensions are supported");
    omega_ = 1.0;
    count_ = 1;
    for (std::size_t d = 0; d < q_.size(); ++d) {
        check_axis(q_[d], "grid.q");
        check_axis(p_[d], "grid.p");
        omega_ *= q_[d].width * p_[d].width;
        count_ *= q_[d].bins;
        if (count_ > kMaxBins) throw ConfigError("grid", "too many bins");
        count_ *= p_[d].bins;
        if (count_ > kMaxBins) throw ConfigError("grid", "too many bins");
    }
}

MuGrid MuGrid::with_omega(std::size_t dim, double omega, double aspect, double q_half, double p_half) {
    if (dim < 1 || dim > 3) throw ConfigError("grid", "dimension must be 1, 2 or 3");
    if (!(omega > 0.0) || !std::isfinite(omega)) throw ConfigError("grid.omega", "must be positive and finite");
    if (!(aspect > 0.0) || !std::isfinite(aspect)) throw ConfigError("grid.aspect", "must be positive and finite");
    if (!(q_half > 0.0) || !(p_half > 0.0)) throw ConfigError("grid", "grid extents must be positive");
    const double pair = std::pow(omega, 1.0 / static_cast<double>(dim));
    const double dq = std::sqrt(pair * aspect), dp = std::sqrt(pair / aspect);
    auto make = [](double half, double w) {
        const double raw = std::ceil(2.0 * half / w);
        if (!(raw < static_cast<double>(kMaxBins))) throw ConfigError("grid", "too many bins");
        const auto bins = std::max<std::size_t>(1, static_cast<std::size_t>(raw));
        return UniformAxis{-0.5 * w * static_cast<double>(bins), w, bins};
    };
    return MuGrid(std::vector<UniformAxis>(dim, make(q_half, dq)), std::vector<UniformAxis>(dim, make(p_half, dp)));
}

std::size_t MuGrid::q_bin_count() const {
    std::size_t c = 1;
    for (const auto& a : q_) c *= a.bins;
    return c;
}

std::optional<std::size_t> MuGrid::locate(std::span<const double> q, std::span<const double> p) const {
    std::size_t flat = 0;
    for (std::size_t d = 0; d < q_.size(); ++d) {
        const long i = q_[d].locate(q[d]);
        if (i < 0) return std::nullopt;
        flat = flat * q_[d].bins + static_cast<std::size_t>(i);
    }
    for (std::size_t d = 0; d < p_.size(); ++d) {
        const long i = p_[d].locate(p[d]);
        if (i < 0) return std::nullopt;
        flat = flat * p_[d].bins + static_cast<std::size_t>(i);
    }
    return flat;
}

std::vector<std::size_t> MuGrid::unflatten(std::size_t flat) const {
    const std::size_t D = q_.size();
    std::vector<std::size_t> idx(2 * D);
    for (std::size_t k = 2 * D; k-- > 0;) {
        const std::size_t bins = k < D ? q_[k].bins : p_[k - D].bins;
        idx[k] = flat % bins;
        flat /= bins;
    }
    return idx;
}

std::vector<double> MuGrid::center(std::size_t flat) const {
    const auto idx = unflatten(flat);
    const std::size_t D = q_.size();
    std::vector<double> c(2 * D);
    for (std::size_t d = 0; d < D; ++d) {
        c[d] = q_[d].center(idx[d]);
        c[D + d] = p_[d].center(idx[D + d]);
    }
    return c;
}

std::size_t MuGrid::q_flat(std::size_t flat) const {
    std::size_t p_count = 1;
    for (const auto& a : p_) p_count *= a.bins;
    return flat / p_count;
}

MuGrid default_grid(std::size_t dim, double eta0, double omega_factor, double position_extent,
                    double momentum_extent, double q_half, double p_half) {
    if (!(eta0 > 0.0)) throw ConfigError("grid", "fine-grained density must be positive to set omega");
    if (!(omega_factor > 0.0)) throw ConfigError("grid.omega_factor", "must be positive");
    if (!(position_extent > 0.0) || !(momentum_extent > 0.0))
        throw ConfigError("grid", "waterbag extents must be positive to set the bin aspect");
    return MuGrid::with_omega(dim, omega_factor / eta0, position_extent / momentum_extent, q_half, p_half);
}

// ---------------------------------------------------------------------------

double CoarseGrainedDistribution::max_f() const {
    return f.empty() ? 0.0 : *std::max_element(f.begin(), f.end());
}

std::uint64_t CoarseGrainedDistribution::min_occupied_count() const {
    std::uint64_t best = 0;
    for (auto c : counts)
        if (c > 0 && (best == 0 || c < best)) best = c;
    return best;
}

std::size_t CoarseGrainedDistribution::occupied_bins() const {
    return static_cast<std::size_t>(std::count_if(f.begin(), f.end(), [](double x) { return x > 0.0; }));
}

CoarseGrainedDistribution coarse_grain(const CanonicalState& state, const MuGrid& grid, SolitonMass M,
                                       double t_override) {
    state.validate();
    if (grid.dim() != state.dim) throw GridMismatch("grid dimension differs from state dimension");
    CoarseGrainedDistribution dist;
    dist.grid = grid;
    dist.t = std::isnan(t_override) ? state.t : t_override;
    dist.particle_mass = M.value();
    dist.counts.assign(grid.bin_count(), 0);
    std::uint64_t outside = 0, inside = 0;
    for (std::size_t i = 0; i < state.size(); ++i) {
        const auto bin = grid.locate(state.position(i), state.momentum(i));
        if (!bin) {
            ++outside;
            continue;
        }
        ++dist.counts[*bin];
        ++inside;
    }
    dist.f.resize(dist.counts.size());
    const double scale = M.value() / grid.omega();
    for (std::size_t b = 0; b < dist.f.size(); ++b) dist.f[b] = static_cast<double>(dist.counts[b]) * scale;
    dist.total_mass = static_cast<double>(inside) * M.value();
    dist.out_of_grid_mass = static_cast<double>(outside) * M.value();
    if (state.size() > 0 && static_cast<double>(outside) > 0.01 * static_cast<double>(state.size()))
        throw OutOfGrid(std::to_string(outside) + " of " + std::to_string(state.size()) +
                        " particles fall outside the mu-space grid (limit 1%)");
    return dist;
}

// ---------------------------------------------------------------------------

std::vector<NodeAxis> mean_field_nodes(const MuGrid& grid) {
    std::vector<NodeAxis> axes;
    for (const auto& a : grid.q_axes()) axes.push_back(NodeAxis{a.lo, 0.5 * a.width, 2 * a.bins + 1});
    return axes;
}

namespace {

// Potential at q of a unit number of condensates spread uniformly over [x0, x1].
double sheet_slab(double c, double q, double x0, double x1) {
    if (q <= x0) return c * (0.5 * (x0 + x1) - q);
    if (q >= x1) return c * (q - 0.5 * (x0 + x1));
    return c * ((q - x0) * (q - x0) + (x1 - q) * (x1 - q)) / (2.0 * (x1 - x0));
}

double cosine_slab(double c, double q, double x0, double x1) {
    return -c * (std::sin(q - x0) - std::sin(q - x1)) / (x1 - x0);
}

}  // namespace

MeanFieldPotential mean_field_potential(const CoarseGrainedDistribution& dist, const PairPotential& pot) {
    pot.validate();
    if (pot.singular_at_contact())
        throw SingularEvaluation("mean field of an unsoftened newtonian3d kernel is singular at bin centres");
    const MuGrid& grid = dist.grid;
    if (dist.f.size() != grid.bin_count()) throw GridMismatch("distribution does not match its grid");
    const std::size_t D = grid.dim();
    auto nodes = mean_field_nodes(grid);
    MeanFieldPotential mf = MeanFieldPotential::zero(nodes);

    // number of condensates in each q-bin
    const std::size_t nq = grid.q_bin_count();
    const std::size_t np = grid.bin_count() / nq;
    const double per_bin = grid.omega() / dist.particle_mass;
    std::vector<double> number(nq, 0.0);
    for (std::size_t b = 0; b < grid.bin_count(); ++b) number[b / np] += dist.f[b] * per_bin;

    std::vector<double> occupied;
    std::vector<std::size_t> occupied_index;
    for (std::size_t k = 0; k < nq; ++k) {
        if (number[k] == 0.0) continue;
        occupied_index.push_back(k);
        occupied.push_back(number[k]);
    }
    if (occupied.empty()) return mf;
    const auto& qa = grid.q_axes();
    auto q_index = [&](std::size_t flat, std::size_t d) {
        std::size_t stride = 1;
        for (std::size_t e = d + 1; e < D; ++e) stride *= qa[e].bins;
        return (flat / stride) % qa[d].bins;
    };

    const bool exact_1d = D == 1 && (pot.kind == PotentialKind::sheet1d || pot.kind == PotentialKind::cosine);
    auto& values = mf.values();
    for (std::size_t node = 0; node < values.size(); ++node) {
        const auto x = mf.node_position(node);
        double phi = 0.0;
        for (std::size_t o = 0; o < occupied.size(); ++o) {
            const std::size_t k = occupied_index[o];
            if (exact_1d) {
                const double x0 = qa[0].edge(k), x1 = qa[0].edge(k + 1);
                phi += occupied[o] * (pot.kind == PotentialKind::sheet1d ? sheet_slab(pot.coupling, x[0], x0, x1)
                                                                         : cosine_slab(pot.coupling, x[0], x0, x1));
                continue;
            }
            double r2 = 0.0;
            for (std::size_t d = 0; d < D; ++d) {
                const double dx = x[d] - qa[d].center(q_index(k, d));
                r2 += dx * dx;
            }
            phi += occupied[o] * pair_potential(pot, std::sqrt(r2));
        }
        values[node] = phi;
    }
    return mf;
}

// ---------------------------------------------------------------------------

EnergyTable energy_marginal(const CoarseGrainedDistribution& dist, const MeanFieldPotential& mf, SolitonMass M,
                            std::size_t n_energy_bins, std::optional<EnergyRange> range) {
    if (n_energy_bins == 0) throw ConfigError("fit.n_energy_bins", "need at least one energy bin");
    const MuGrid& grid = dist.grid;
    const std::size_t D = grid.dim();
    if (mf.dim() != D) throw GridMismatch("mean field and distribution differ in dimension");
    if (dist.f.size() != grid.bin_count()) throw GridMismatch("distribution does not match its grid");

    const std::size_t nq = grid.q_bin_count();
    const std::size_t np = grid.bin_count() / nq;
    // potential per q-bin centre and kinetic energy per p-bin centre
    std::vector<double> phi(nq), kin(np);
    std::vector<double> x(D);
    for (std::size_t k = 0; k < nq; ++k) {
        const auto c = grid.center(k * np);
        std::copy(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(D), x.begin());
        if (!mf.contains(x)) throw GridMismatch("mean-field lattice does not cover the distribution grid");
        phi[k] = mf.evaluate(x);
    }
    for (std::size_t j = 0; j < np; ++j) {
        const auto c = grid.center(j);
        double p2 = 0.0;
        for (std::size_t d = 0; d < D; ++d) p2 += c[D + d] * c[D + d];
        kin[j] = p2 / (2.0 * M.value());
    }
    auto energy = [&](std::size_t b) { return phi[b / np] + kin[b % np]; };

    double lo, hi;
    if (range) {
        lo = range->lo;
        hi = range->hi;
        if (!(hi > lo)) throw ConfigError("fit.energy_range", "upper energy must exceed lower energy");
    } else {
        lo = std::numeric_limits<double>::infinity();
        double top_all = -lo, top_occ = -lo;
        for (std::size_t b = 0; b < grid.bin_count(); ++b) {
            const double e = energy(b);
            lo = std::min(lo, e);
            top_all = std::max(top_all, e);
            if (dist.f[b] > 0.0) top_occ = std::max(top_occ, e);
        }
        const double top = std::isfinite(top_occ) ? top_occ : top_all;
        const double span = top - lo;
        if (span > 0.0) {
            hi = top + span / static_cast<double>(n_energy_bins);
        } else {
            hi = lo + 1.0;
        }
    }

    EnergyTable table;
    table.lo = lo;
    table.width = (hi - lo) / static_cast<double>(n_energy_bins);
    const UniformAxis axis{lo, table.width, n_energy_bins};
    std::vector<double> sum(n_energy_bins, 0.0);
    std::vector<std::size_t> count(n_energy_bins, 0);
    for (std::size_t b = 0; b < grid.bin_count(); ++b) {
        const long s = axis.locate(energy(b));
        if (s < 0) continue;
        sum[static_cast<std::size_t>(s)] += dist.f[b];
        ++count[static_cast<std::size_t>(s)];
    }
    table.rows.resize(n_energy_bins);
    for (std::size_t s = 0; s < n_energy_bins; ++s) {
        auto& row = table.rows[s];
        row.epsilon = axis.center(s);
        row.n_bins = count[s];
        row.shell_volume = static_cast<double>(count[s]) * grid.omega();
        row.f_mean = count[s] > 0 ? sum[s] / static_cast<double>(count[s]) : std::numeric_limits<double>::quiet_NaN();
    }
    return table;
}

double stationarity_metric(const CoarseGrainedDistribution& a, const CoarseGrainedDistribution& b) {
    if (!(a.grid == b.grid) || a.f.size() != b.f.size()) throw GridMismatch("stationarity metric needs identical grids");
    double l1 = 0.0, ma = 0.0, mb = 0.0;
    for (std::size_t k = 0; k < a.f.size(); ++k) {
        l1 += std::abs(a.f[k] - b.f[k]);
        ma += a.f[k];
        mb += b.f[k];
    }
    const double mean_mass = 0.5 * (ma + mb);
    if (mean_mass == 0.0) return 0.0;
    return l1 / mean_mass;  // omega cancels between numerator and denominator
}

QssDetector::QssDetector(double threshold, std::size_t window)
    : threshold_(threshold), size_(window), current_max_(std::numeric_limits<double>::quiet_NaN()) {
    if (!(threshold > 0.0)) throw ConfigError("qss.threshold", "must be positive");
    if (window < 2) throw ConfigError("qss.window", "window must hold at least two snapshots");
}

bool QssDetector::push(CoarseGrainedDistribution dist) {
    window_.push_back(std::move(dist));
    if (window_.size() > size_) window_.pop_front();
    if (!window_full()) return false;
    double worst = 0.0;
    for (std::size_t i = 0; i < window_.size(); ++i)
        for (std::size_t j = i + 1; j < window_.size(); ++j)
            worst = std::max(worst, stationarity_metric(window_[i], window_[j]));
    current_max_ = worst;
    history_.emplace_back(window_.back().t, worst);
    const bool ok = worst < threshold_;
    if (ok) {
        ++consecutive_;
        if (!first_time_) first_time_ = window_.back().t;
    } else {
        consecutive_ = 0;
    }
    return ok;
}

void QssDetector::restore(std::vector<std::pair<double, double>> history, std::size_t consecutive,
                          std::optional<double> first_time) {
    history_ = std::move(history);
    consecutive_ = consecutive;
    first_time_ = first_time;
}

double casimir_bound(double eta0, std::uint64_t min_occupied_count) {
    if (min_occupied_count == 0) return eta0;
    return eta0 + 3.0 * eta0 / std::sqrt(static_cast<double>(min_occupied_count));
}

double casimir_bound_expected(double eta0, double omega, SolitonMass M) {
    const double expected = eta0 * omega / M.value();
    if (!(expected > 0.0)) throw ConfigError("grid.omega", "expected bin count must be positive");
    return eta0 * (1.0 + 3.0 / std::sqrt(expected));
}

}  // namespace qss
