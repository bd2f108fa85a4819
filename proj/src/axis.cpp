#include "qss/axis.hpp"

#include <cmath>

namespace qss {

long UniformAxis::locate(double x) const {
    if (!(x >= lo) || bins == 0) return -1;
    const double s = (x - lo) / width;
    if (s >= static_cast<double>(bins)) return -1;
    auto i = static_cast<long>(std::floor(s));
    // floor can land on `bins` when x is one ulp below hi
    if (i >= static_cast<long>(bins)) i = static_cast<long>(bins) - 1;
    return i;
}

std::vector<double> UniformAxis::edges() const {
    std::vector<double> out(bins + 1);
    for (std::size_t i = 0; i <= bins; ++i) out[i] = edge(i);
    return out;
}

}  // namespace qss
