#include "marginlab/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace marginlab {

double dot(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double norm(std::span<const double> v) {
    return std::sqrt(dot(v, v));
}

Angle::Angle(double radians) : radians_(radians) {
    if (!std::isfinite(radians) || radians < 0.0 || radians > kPi) {
        throw std::domain_error("Angle: radians must lie in [0, pi]");
    }
}

Angle Angle::from_cos(double cosine) {
    const double c = std::clamp(cosine, -1.0 + kCosClamp, 1.0 - kCosClamp);
    return Angle(std::acos(c));
}

std::vector<double> normalize(std::span<const double> v) {
    const double n = norm(v);
    if (!std::isfinite(n) || n <= 0.0) {
        throw std::domain_error("normalize: zero or non-finite vector");
    }
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / n;
    return out;
}

Angle angle_between(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) {
        throw std::domain_error("angle_between: dimension mismatch");
    }
    return Angle::from_cos(dot(u, v));
}

SoftmaxCrossEntropy softmax_cross_entropy(std::span<const double> logits, std::size_t target) {
    if (target >= logits.size()) {
        throw std::domain_error("softmax_cross_entropy: target out of range");
    }
    double mx = logits[0];
    for (double z : logits) {
        if (!std::isfinite(z)) {
            throw std::domain_error("softmax_cross_entropy: non-finite logit");
        }
        mx = std::max(mx, z);
    }

    SoftmaxCrossEntropy out;
    out.grad.resize(logits.size());
    double sum = 0.0;
    for (std::size_t j = 0; j < logits.size(); ++j) {
        out.grad[j] = std::exp(logits[j] - mx);
        sum += out.grad[j];
    }
    for (double& g : out.grad) g /= sum;
    out.grad[target] -= 1.0;
    // lse >= z[target] holds exactly in reals; guard the last-ulp case.
    out.loss = std::max(0.0, mx + std::log(sum) - logits[target]);
    return out;
}

}  // namespace marginlab
