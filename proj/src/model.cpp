#include "qss/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "qss/error.hpp"

namespace qss {

SolitonMass::SolitonMass(double value) : value_(value) {
    if (!(value > 0.0) || !std::isfinite(value))
        throw ConfigError("model.mass", "soliton mass must be positive and finite");
}

std::string to_string(PotentialKind kind) {
    switch (kind) {
        case PotentialKind::newtonian3d: return "newtonian3d";
        case PotentialKind::sheet1d: return "sheet1d";
        case PotentialKind::cosine: return "cosine";
    }
    return "unknown";
}

PotentialKind potential_kind_from_string(const std::string& name) {
    if (name == "newtonian3d") return PotentialKind::newtonian3d;
    if (name == "sheet1d") return PotentialKind::sheet1d;
    if (name == "cosine") return PotentialKind::cosine;
    throw ConfigError("model.potential", "unknown potential kind '" + name +
                                             "' (expected newtonian3d, sheet1d or cosine)");
}

void PairPotential::validate() const {
    if (!std::isfinite(coupling)) throw ConfigError("model.coupling", "coupling must be finite");
    if (!(softening >= 0.0) || !std::isfinite(softening))
        throw ConfigError("model.softening", "softening must be finite and >= 0");
    if (kind != PotentialKind::newtonian3d && softening != 0.0)
        throw ConfigError("model.softening", to_string(kind) + " does not take a softening length");
}

double pair_potential(const PairPotential& pot, double r) {
    if (!(r >= 0.0)) throw NumericalError("pair separation must be >= 0");
    switch (pot.kind) {
        case PotentialKind::newtonian3d:
            if (r == 0.0 && pot.softening == 0.0)
                throw SingularEvaluation("unsoftened Newtonian potential evaluated at zero separation");
            return -pot.coupling / std::sqrt(r * r + pot.softening * pot.softening);
        case PotentialKind::sheet1d:
            return pot.coupling * r;
        case PotentialKind::cosine:
            return -pot.coupling * std::cos(r);
    }
    return 0.0;
}

double pair_potential_derivative(const PairPotential& pot, double r) {
    if (!(r >= 0.0)) throw NumericalError("pair separation must be >= 0");
    switch (pot.kind) {
        case PotentialKind::newtonian3d: {
            if (r == 0.0 && pot.softening == 0.0)
                throw SingularEvaluation("unsoftened Newtonian force evaluated at zero separation");
            const double s2 = r * r + pot.softening * pot.softening;
            return pot.coupling * r / (s2 * std::sqrt(s2));
        }
        case PotentialKind::sheet1d:
            return r == 0.0 ? 0.0 : pot.coupling;
        case PotentialKind::cosine:
            return pot.coupling * std::sin(r);
    }
    return 0.0;
}

double pair_force_factor(const PairPotential& pot, double r) {
    switch (pot.kind) {
        case PotentialKind::newtonian3d: {
            if (r == 0.0 && pot.softening == 0.0)
                throw SingularEvaluation("coincident particles under unsoftened Newtonian gravity");
            const double s2 = r * r + pot.softening * pot.softening;
            return -pot.coupling / (s2 * std::sqrt(s2));
        }
        case PotentialKind::sheet1d:
            return r == 0.0 ? 0.0 : -pot.coupling / r;
        case PotentialKind::cosine:
            return r == 0.0 ? 0.0 : -pot.coupling * std::sin(r) / r;
    }
    return 0.0;
}

CanonicalState::CanonicalState(std::size_t dim_, std::size_t n) : dim(dim_), q(dim_ * n), p(dim_ * n) {}

void CanonicalState::validate() const {
    if (dim == 0) throw ConfigError("state.dim", "dimension must be positive");
    if (q.size() != p.size()) throw ConfigError("state", "position and momentum arrays differ in length");
    if (q.size() % dim != 0) throw ConfigError("state", "array length is not a multiple of the dimension");
    if (!std::isfinite(t)) throw ConfigError("state.t", "time must be finite");
    for (std::size_t i = 0; i < q.size(); ++i) {
        if (!std::isfinite(q[i]) || !std::isfinite(p[i]))
            throw ConfigError("state", "non-finite entry for particle " + std::to_string(i / dim));
    }
}

// ---------------------------------------------------------------------------
// Gauge fields

GaugeField GaugeField::trivial(std::size_t dim) {
    GaugeField g = constant(1.0, std::vector<double>(dim, 0.0));
    g.name_ = "trivial";
    return g;
}

GaugeField GaugeField::constant(double lapse, std::vector<double> shift) {
    if (!(lapse > 0.0) || !std::isfinite(lapse))
        throw ConfigError("gauge.lapse", "lapse must be positive and finite");
    for (double s : shift)
        if (!std::isfinite(s)) throw ConfigError("gauge.shift", "shift must be finite");
    GaugeField g;
    g.dim_ = shift.size();
    g.name_ = "constant";
    g.constant_ = true;
    g.lapse0_ = lapse;
    g.shift0_ = std::move(shift);
    return g;
}

GaugeField GaugeField::sinusoidal(std::size_t dim, double base, double amplitude, double omega,
                                  double wavenumber) {
    if (!(base > std::abs(amplitude)))
        throw ConfigError("gauge.amplitude", "sinusoidal lapse needs base > |amplitude| to stay positive");
    GaugeField g;
    g.dim_ = dim;
    g.name_ = "sinusoidal";
    g.lapse_fn_ = [=](std::span<const double> x, double t) {
        double phase = omega * t;
        for (double xa : x) phase += wavenumber * xa;
        return base + amplitude * std::sin(phase);
    };
    return g;
}

GaugeField GaugeField::custom(std::size_t dim, LapseFn lapse, ShiftFn shift, std::string name) {
    if (!lapse) throw ConfigError("gauge", "custom gauge needs a lapse function");
    GaugeField g;
    g.dim_ = dim;
    g.name_ = std::move(name);
    g.lapse_fn_ = std::move(lapse);
    g.shift_fn_ = std::move(shift);
    return g;
}

bool GaugeField::is_trivial() const {
    return constant_ && lapse0_ == 1.0 &&
           std::all_of(shift0_.begin(), shift0_.end(), [](double s) { return s == 0.0; });
}

double GaugeField::lapse(std::span<const double> x, double t) const {
    const double n = constant_ ? lapse0_ : lapse_fn_(x, t);
    if (!(n > 0.0) || !std::isfinite(n))
        throw NumericalError("gauge '" + name_ + "' produced a non-positive lapse " + std::to_string(n));
    return n;
}

void GaugeField::shift(std::span<const double> x, double t, std::span<double> out) const {
    if (constant_) {
        std::copy(shift0_.begin(), shift0_.end(), out.begin());
    } else if (shift_fn_) {
        shift_fn_(x, t, out);
    } else {
        std::fill(out.begin(), out.end(), 0.0);
    }
}

std::vector<double> GaugeField::shift(std::span<const double> x, double t) const {
    std::vector<double> out(dim_, 0.0);
    shift(x, t, out);
    return out;
}

double GaugeField::constant_lapse() const {
    if (!constant_) throw ConfigError("gauge", "gauge '" + name_ + "' is not constant");
    return lapse0_;
}

const std::vector<double>& GaugeField::constant_shift() const {
    if (!constant_) throw ConfigError("gauge", "gauge '" + name_ + "' is not constant");
    return shift0_;
}

// ---------------------------------------------------------------------------
// Energies

double kinetic_energy(const CanonicalState& state, SolitonMass M) {
    double sum = 0.0;
    for (double pi : state.p) sum += pi * pi;
    return sum / (2.0 * M.value());
}

namespace {

double sheet_energy_1d(const std::vector<double>& q, double coupling) {
    std::vector<double> s(q);
    std::sort(s.begin(), s.end());
    const double n1 = static_cast<double>(s.size()) - 1.0;
    // sum_{i<j} (s_j - s_i) = sum_k s_k (2k - (n - 1))
    double sum = 0.0;
    for (std::size_t k = 0; k < s.size(); ++k) sum += s[k] * (2.0 * static_cast<double>(k) - n1);
    return coupling * sum;
}

double cosine_energy_1d(const std::vector<double>& q, double coupling) {
    double c = 0.0, s = 0.0;
    for (double x : q) {
        c += std::cos(x);
        s += std::sin(x);
    }
    return -0.5 * coupling * (c * c + s * s - static_cast<double>(q.size()));
}

double pair_energy_direct(const CanonicalState& state, const PairPotential& pot) {
    const std::size_t n = state.size(), D = state.dim;
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* qi = state.q.data() + i * D;
        for (std::size_t j = i + 1; j < n; ++j) {
            const double* qj = state.q.data() + j * D;
            double r2 = 0.0;
            for (std::size_t d = 0; d < D; ++d) r2 += (qi[d] - qj[d]) * (qi[d] - qj[d]);
            sum += pair_potential(pot, std::sqrt(r2));
        }
    }
    return sum;
}

}  // namespace

double potential_energy(const CanonicalState& state, const PairPotential& pot) {
    pot.validate();
    if (state.size() < 2 || pot.coupling == 0.0) return 0.0;
    if (state.dim == 1 && pot.kind == PotentialKind::sheet1d) return sheet_energy_1d(state.q, pot.coupling);
    if (state.dim == 1 && pot.kind == PotentialKind::cosine) return cosine_energy_1d(state.q, pot.coupling);
    return pair_energy_direct(state, pot);
}

std::vector<double> total_momentum(const CanonicalState& state) {
    std::vector<double> total(state.dim, 0.0);
    for (std::size_t i = 0; i < state.size(); ++i)
        for (std::size_t d = 0; d < state.dim; ++d) total[d] += state.p[i * state.dim + d];
    return total;
}

double total_hamiltonian(const CanonicalState& state, const PairPotential& pot, const GaugeField& gauge,
                         SolitonMass M) {
    state.validate();
    pot.validate();
    if (gauge.dim() != state.dim) throw ConfigError("gauge", "gauge dimension differs from state dimension");
    if (gauge.is_trivial()) return kinetic_energy(state, M) + potential_energy(state, pot);

    const std::size_t n = state.size(), D = state.dim;
    std::vector<double> shift(D);
    double h = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto qi = state.position(i);
        const auto pi = state.momentum(i);
        double p2 = 0.0;
        for (double x : pi) p2 += x * x;
        double half_pairs = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            double r2 = 0.0;
            for (std::size_t d = 0; d < D; ++d) {
                const double dx = qi[d] - state.q[j * D + d];
                r2 += dx * dx;
            }
            half_pairs += pair_potential(pot, std::sqrt(r2));
        }
        h += gauge.lapse(qi, state.t) * (p2 / (2.0 * M.value()) + 0.5 * half_pairs);
        gauge.shift(qi, state.t, shift);
        for (std::size_t d = 0; d < D; ++d) h += shift[d] * pi[d];
    }
    return h;
}

std::vector<double> canonical_momentum(std::span<const double> qdot, double lapse, std::span<const double> shift,
                                       SolitonMass M) {
    if (!(lapse > 0.0)) throw NumericalError("canonical momentum requires a positive lapse");
    if (shift.size() != qdot.size()) throw ConfigError("gauge.shift", "shift and velocity differ in dimension");
    std::vector<double> p(qdot.size());
    for (std::size_t a = 0; a < qdot.size(); ++a) p[a] = M.value() * (qdot[a] - shift[a]) / lapse;
    return p;
}

std::vector<double> velocity_from_momentum(std::span<const double> p, double lapse, std::span<const double> shift,
                                           SolitonMass M) {
    if (!(lapse > 0.0)) throw NumericalError("velocity requires a positive lapse");
    if (shift.size() != p.size()) throw ConfigError("gauge.shift", "shift and momentum differ in dimension");
    std::vector<double> v(p.size());
    for (std::size_t a = 0; a < p.size(); ++a) v[a] = lapse * p[a] / M.value() + shift[a];
    return v;
}

double one_particle_energy(std::span<const double> q, std::span<const double> p, const MeanFieldPotential& mf,
                           SolitonMass M) {
    double p2 = 0.0;
    for (double x : p) p2 += x * x;
    return p2 / (2.0 * M.value()) + mf.evaluate(q);
}

std::vector<double> velocity_to_physical_shift(std::span<const double> qdot) {
    std::vector<double> out(qdot.size());
    std::transform(qdot.begin(), qdot.end(), out.begin(), [](double v) { return -v; });
    return out;
}

}  // namespace qss
