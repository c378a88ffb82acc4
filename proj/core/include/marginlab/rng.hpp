#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace marginlab {

/// Deterministic random stream. Draws are derived from std::mt19937_64 with
/// pinned transforms (no std::*_distribution, whose output is
/// implementation-defined), so a seed produces the same sequence on every
/// platform and standard library.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    /// Uniform double in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform index in [0, n). n must be positive. Modulo bias is below
    /// 2^-53 for any desk-scale n.
    std::size_t index(std::size_t n) { return static_cast<std::size_t>(gen_() % n); }

    /// Standard normal via Box-Muller; the second draw of each pair is cached.
    double normal();

    /// Gaussian vector renormalized; uniform on the unit sphere. dim >= 1.
    std::vector<double> unit_vector(std::size_t dim);

    /// Fisher-Yates with pinned draw order.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[index(i)]);
        }
    }

private:
    std::mt19937_64 gen_;
    double cached_normal_ = 0.0;
    bool has_cached_ = false;
};

}  // namespace marginlab
