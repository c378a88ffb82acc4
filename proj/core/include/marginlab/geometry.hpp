#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace marginlab {

inline constexpr double kPi = 3.14159265358979323846;

/// Dot products are clamped to [-1 + kCosClamp, 1 - kCosClamp] before acos.
/// d(acos)/d(cos) is singular at +-1; the clamp bounds its magnitude at
/// about 2.24e3 and keeps every angle computation NaN-free.
inline constexpr double kCosClamp = 1e-7;

/// Tolerance for "this row is a unit vector" checks.
inline constexpr double kUnitNormTol = 1e-9;

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> v);

/// Angle in radians, guaranteed inside [0, pi].
class Angle {
public:
    /// Throws std::domain_error outside [0, pi] or non-finite.
    explicit Angle(double radians);

    /// acos of the clamped cosine; total on all finite inputs.
    static Angle from_cos(double cosine);

    double radians() const { return radians_; }

private:
    double radians_;
};

/// v / ||v||. Throws std::domain_error for the zero vector.
std::vector<double> normalize(std::span<const double> v);

/// Angle between two unit vectors: acos of the clamped dot product.
/// Symmetric in its arguments and never NaN, even for colinear inputs.
/// Throws std::domain_error on dimension mismatch.
Angle angle_between(std::span<const double> u, std::span<const double> v);

struct SoftmaxCrossEntropy {
    double loss = 0.0;              // -z[target] + logsumexp(z), >= 0
    std::vector<double> grad;       // softmax(z) - onehot(target)
};

/// Stable softmax cross-entropy kernel (max-subtraction logsumexp).
/// Throws std::domain_error for an out-of-range target or non-finite logits.
SoftmaxCrossEntropy softmax_cross_entropy(std::span<const double> logits, std::size_t target);

}  // namespace marginlab
