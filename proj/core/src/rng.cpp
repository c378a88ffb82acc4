#include "marginlab/rng.hpp"

#include <cmath>

#include "marginlab/geometry.hpp"

namespace marginlab {

double Rng::normal() {
    if (has_cached_) {
        has_cached_ = false;
        return cached_normal_;
    }
    // u1 in (0, 1] so the log is finite.
    const double u1 = (static_cast<double>(gen_() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double phi = 2.0 * kPi * u2;
    cached_normal_ = r * std::sin(phi);
    has_cached_ = true;
    return r * std::cos(phi);
}

std::vector<double> Rng::unit_vector(std::size_t dim) {
    std::vector<double> v(dim);
    for (;;) {
        for (auto& x : v) x = normal();
        const double n = norm(v);
        if (n > 1e-12) {
            for (auto& x : v) x /= n;
            return v;
        }
    }
}

}  // namespace marginlab
