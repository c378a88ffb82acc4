#include "marginlab/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "marginlab/geometry.hpp"

namespace marginlab {

double gradcheck_rel_err(double fd, double an, double floor_scale) {
    return std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), floor_scale});
}

std::vector<std::vector<double>> tangent_basis(std::span<const double> v) {
    const std::size_t d = v.size();
    std::vector<std::vector<double>> basis;
    for (std::size_t axis = 0; axis < d; ++axis) {
        if (basis.size() == d - 1) break;
        std::vector<double> t(d, 0.0);
        t[axis] = 1.0;
        const double radial = dot(t, v);
        for (std::size_t i = 0; i < d; ++i) t[i] -= radial * v[i];
        for (const auto& b : basis) {
            const double proj = dot(t, b);
            for (std::size_t i = 0; i < d; ++i) t[i] -= proj * b[i];
        }
        const double n = norm(t);
        if (n < 1e-6) continue;
        for (auto& x : t) x /= n;
        basis.push_back(std::move(t));
    }
    return basis;
}

FdResult fd_check(const EmbeddingBatch& batch, const ClassWeights& weights,
                  const LossConfig& config, double step) {
    const auto analytic = forward_backward(batch, weights, config);
    FdResult result;

    auto probe_row = [&](Matrix& m, std::size_t r, std::span<const double> grad_row,
                         auto&& eval, const char* what) {
        const std::vector<double> original(m.row(r).begin(), m.row(r).end());
        for (const auto& t : tangent_basis(original)) {
            std::vector<double> shifted(original);
            for (std::size_t i = 0; i < shifted.size(); ++i) shifted[i] += step * t[i];
            auto unit = normalize(shifted);
            std::copy(unit.begin(), unit.end(), m.row(r).begin());
            const double up = eval();

            for (std::size_t i = 0; i < shifted.size(); ++i) {
                shifted[i] = original[i] - step * t[i];
            }
            unit = normalize(shifted);
            std::copy(unit.begin(), unit.end(), m.row(r).begin());
            const double down = eval();

            std::copy(original.begin(), original.end(), m.row(r).begin());

            const double fd = (up - down) / (2.0 * step);
            const double an = dot(grad_row, t);
            const double err = gradcheck_rel_err(fd, an);
            if (err > result.max_rel_err) {
                result.max_rel_err = err;
                result.worst = std::string(what) + " row " + std::to_string(r) +
                               ": fd=" + std::to_string(fd) +
                               " analytic=" + std::to_string(an);
            }
        }
    };

    EmbeddingBatch b = batch;
    ClassWeights w = weights;
    for (std::size_t i = 0; i < b.size(); ++i) {
        probe_row(
            b.features, i, analytic.grad_features.row(i),
            [&] { return forward_backward(b, weights, config).loss; }, "feature");
    }
    for (std::size_t j = 0; j < w.count(); ++j) {
        probe_row(
            w.weights, j, analytic.grad_weights.row(j),
            [&] { return forward_backward(batch, w, config).loss; }, "weight");
    }
    return result;
}

GradCheckInstance random_gradcheck_instance(LossKind kind, Rng& rng) {
    GradCheckInstance inst;
    inst.config.kind = kind;
    inst.config.s = rng.uniform(2.0, 24.0);
    inst.config.m = rng.uniform(0.0, 0.8);
    inst.config.a = rng.uniform(-2.0, -0.4);
    inst.config.h = rng.uniform(-0.8, 0.4);
    inst.config.k = rng.uniform(0.3, 1.0);

    const std::size_t d = 2 + rng.index(5);
    const std::size_t c = 2 + rng.index(5);
    const std::size_t n = 1 + rng.index(4);

    inst.weights.weights = Matrix(c, d);
    for (std::size_t j = 0; j < c; ++j) {
        const auto w = rng.unit_vector(d);
        std::copy(w.begin(), w.end(), inst.weights.weights.row(j).begin());
    }

    inst.batch.features = Matrix(n, d);
    inst.batch.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        inst.batch.labels[i] = rng.index(c);
        const auto w = inst.weights.weights.row(inst.batch.labels[i]);
        for (;;) {
            const auto x = rng.unit_vector(d);
            const double ang = angle_between(x, w).radians();
            if (ang >= 0.1 && ang <= kPi - 0.1) {
                std::copy(x.begin(), x.end(), inst.batch.features.row(i).begin());
                break;
            }
        }
    }
    return inst;
}

GradCheckSummary gradient_check(LossKind kind, std::size_t trials, std::uint64_t seed) {
    Rng rng(seed);
    GradCheckSummary summary;
    summary.trials = trials;
    for (std::size_t trial = 0; trial < trials; ++trial) {
        const auto inst = random_gradcheck_instance(kind, rng);
        const auto fd = fd_check(inst.batch, inst.weights, inst.config);
        if (fd.max_rel_err > summary.max_rel_err) {
            summary.max_rel_err = fd.max_rel_err;
            summary.worst = to_string(kind) + " trial " + std::to_string(trial) + ", " + fd.worst;
        }
    }
    return summary;
}

}  // namespace marginlab
