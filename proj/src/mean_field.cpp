#include "qss/mean_field.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "qss/error.hpp"

namespace qss {

namespace {

std::size_t lattice_size(const std::vector<NodeAxis>& axes) {
    std::size_t n = axes.empty() ? 0 : 1;
    for (const auto& a : axes) n *= a.count;
    return n;
}

}  // namespace

MeanFieldPotential::MeanFieldPotential(std::vector<NodeAxis> axes, std::vector<double> values)
    : axes_(std::move(axes)), values_(std::move(values)) {
    for (const auto& a : axes_) {
        if (a.count < 2 || !(a.spacing > 0.0))
            throw ConfigError("mean_field", "each lattice axis needs >= 2 nodes and positive spacing");
    }
    if (values_.size() != lattice_size(axes_))
        throw ConfigError("mean_field", "value count does not match lattice size");
}

MeanFieldPotential MeanFieldPotential::zero(std::vector<NodeAxis> axes) {
    const std::size_t n = lattice_size(axes);
    return MeanFieldPotential(std::move(axes), std::vector<double>(n, 0.0));
}

std::vector<double> MeanFieldPotential::node_position(std::size_t flat) const {
    std::vector<double> x(dim());
    for (std::size_t d = dim(); d-- > 0;) {
        x[d] = axes_[d].position(flat % axes_[d].count);
        flat /= axes_[d].count;
    }
    return x;
}

bool MeanFieldPotential::contains(std::span<const double> q) const {
    if (q.size() != dim() || dim() == 0) return false;
    for (std::size_t d = 0; d < dim(); ++d) {
        const auto& a = axes_[d];
        const double tol = 1e-12 * (a.last() - a.origin);
        if (!(q[d] >= a.origin - tol && q[d] <= a.last() + tol)) return false;
    }
    return true;
}

double MeanFieldPotential::evaluate(std::span<const double> q) const {
    if (!contains(q)) {
        std::string where;
        for (double x : q) where += (where.empty() ? "" : ", ") + std::to_string(x);
        throw ExtrapolationError("mean-field potential queried outside its lattice at (" + where + ")");
    }
    const std::size_t D = dim();
    std::vector<std::size_t> base(D);
    std::vector<double> frac(D);
    for (std::size_t d = 0; d < D; ++d) {
        const auto& a = axes_[d];
        double s = (q[d] - a.origin) / a.spacing;
        s = std::clamp(s, 0.0, static_cast<double>(a.count - 1));
        auto k = static_cast<std::size_t>(std::floor(s));
        if (k >= a.count - 1) k = a.count - 2;
        base[d] = k;
        frac[d] = s - static_cast<double>(k);
    }
    double result = 0.0;
    const std::size_t corners = std::size_t{1} << D;
    for (std::size_t c = 0; c < corners; ++c) {
        double w = 1.0;
        std::size_t flat = 0;
        for (std::size_t d = 0; d < D; ++d) {
            const bool up = (c >> d) & 1U;
            w *= up ? frac[d] : 1.0 - frac[d];
            flat = flat * axes_[d].count + base[d] + (up ? 1 : 0);
        }
        if (w != 0.0) result += w * values_[flat];
    }
    return result;
}

double MeanFieldPotential::min_value() const {
    if (values_.empty()) return std::numeric_limits<double>::quiet_NaN();
    return *std::min_element(values_.begin(), values_.end());
}

MeanFieldPotential MeanFieldPotential::average(std::span<const MeanFieldPotential> fields) {
    if (fields.empty()) throw ConfigError("mean_field", "cannot average an empty set of potentials");
    MeanFieldPotential out = MeanFieldPotential::zero(fields.front().axes());
    for (const auto& f : fields) {
        if (!f.same_lattice(out)) throw GridMismatch("mean-field potentials live on different lattices");
        for (std::size_t i = 0; i < out.values_.size(); ++i) out.values_[i] += f.values_[i];
    }
    const double inv = 1.0 / static_cast<double>(fields.size());
    for (double& v : out.values_) v *= inv;
    return out;
}

}  // namespace qss
