#include "marginlab/loss.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace marginlab {

std::string to_string(LossKind kind) {
    switch (kind) {
        case LossKind::Softmax: return "softmax";
        case LossKind::NormFace: return "normface";
        case LossKind::CosFace: return "cosface";
        case LossKind::ArcFace: return "arcface";
        case LossKind::X2Softmax: return "x2softmax";
    }
    throw std::invalid_argument("unknown LossKind");
}

LossKind loss_kind_from_string(const std::string& name) {
    if (name == "softmax") return LossKind::Softmax;
    if (name == "normface") return LossKind::NormFace;
    if (name == "cosface") return LossKind::CosFace;
    if (name == "arcface") return LossKind::ArcFace;
    if (name == "x2softmax") return LossKind::X2Softmax;
    throw std::invalid_argument("unknown loss kind: " + name);
}

void LossConfig::validate() const {
    if (!(s > 0.0) || !std::isfinite(s)) {
        throw std::invalid_argument("LossConfig: s must be positive");
    }
    if (kind == LossKind::CosFace || kind == LossKind::ArcFace) {
        if (!(m >= 0.0) || !std::isfinite(m)) {
            throw std::invalid_argument("LossConfig: m must be >= 0");
        }
    }
    if (kind == LossKind::X2Softmax) {
        if (!(a < 0.0) || !std::isfinite(a)) {
            throw std::invalid_argument("LossConfig: a must be negative");
        }
        if (!(k <= 1.0) || !std::isfinite(k) || !std::isfinite(h)) {
            throw std::invalid_argument("LossConfig: k must be <= 1 and h finite");
        }
    }
}

LossConfig LossConfig::from_json(const nlohmann::json& j) {
    LossConfig cfg;
    if (j.contains("kind")) cfg.kind = loss_kind_from_string(j.at("kind").get<std::string>());
    if (j.contains("s")) cfg.s = j.at("s").get<double>();
    if (j.contains("m")) cfg.m = j.at("m").get<double>();
    if (j.contains("a")) cfg.a = j.at("a").get<double>();
    if (j.contains("h")) cfg.h = j.at("h").get<double>();
    if (j.contains("k")) cfg.k = j.at("k").get<double>();
    cfg.validate();
    return cfg;
}

nlohmann::json LossConfig::to_json() const {
    nlohmann::json j;
    j["kind"] = to_string(kind);
    j["s"] = s;
    if (kind == LossKind::CosFace || kind == LossKind::ArcFace) j["m"] = m;
    if (kind == LossKind::X2Softmax) {
        j["a"] = a;
        j["h"] = h;
        j["k"] = k;
    }
    return j;
}

double logit(const LossConfig& config, double theta) {
    switch (config.kind) {
        case LossKind::Softmax:
        case LossKind::NormFace:
            return std::cos(theta);
        case LossKind::CosFace:
            return std::cos(theta) - config.m;
        case LossKind::ArcFace:
            return std::cos(std::clamp(theta + config.m, 0.0, kPi));
        case LossKind::X2Softmax: {
            const double t = theta - config.h;
            return config.a * t * t + config.k;
        }
    }
    throw std::invalid_argument("unknown LossKind");
}

double logit_derivative(const LossConfig& config, double theta) {
    switch (config.kind) {
        case LossKind::Softmax:
        case LossKind::NormFace:
            return -std::sin(theta);
        case LossKind::CosFace:
            return -std::sin(theta);
        case LossKind::ArcFace: {
            if (theta + config.m > kPi) return 0.0;  // clamp saturated
            return -std::sin(theta + config.m);
        }
        case LossKind::X2Softmax:
            return 2.0 * config.a * (theta - config.h);
    }
    throw std::invalid_argument("unknown LossKind");
}

void EmbeddingBatch::validate(std::size_t num_classes) const {
    if (features.rows() != labels.size()) {
        throw std::domain_error("EmbeddingBatch: feature rows != label count");
    }
    for (std::size_t i = 0; i < features.rows(); ++i) {
        const double n = norm(features.row(i));
        if (!std::isfinite(n) || std::abs(n - 1.0) > kUnitNormTol) {
            throw std::domain_error("EmbeddingBatch: row " + std::to_string(i) +
                                    " is not unit norm");
        }
        if (labels[i] >= num_classes) {
            throw std::domain_error("EmbeddingBatch: label " + std::to_string(labels[i]) +
                                    " out of range for " + std::to_string(num_classes) +
                                    " classes");
        }
    }
}

void ClassWeights::validate() const {
    for (std::size_t j = 0; j < weights.rows(); ++j) {
        const double n = norm(weights.row(j));
        if (!std::isfinite(n) || std::abs(n - 1.0) > kUnitNormTol) {
            throw std::domain_error("ClassWeights: row " + std::to_string(j) +
                                    " is not unit norm");
        }
    }
}

namespace {

// Projects g onto the tangent space at unit vector v: g -= (g.v) v.
void project_tangent(std::span<double> g, std::span<const double> v) {
    const double radial = dot(g, v);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] -= radial * v[i];
}

}  // namespace

LossResult forward_backward(const EmbeddingBatch& batch, const ClassWeights& weights,
                            const LossConfig& config) {
    config.validate();
    weights.validate();
    batch.validate(weights.count());
    if (batch.dim() != weights.dim()) {
        throw std::domain_error("forward_backward: feature/weight dimension mismatch");
    }

    const std::size_t n = batch.size();
    const std::size_t c = weights.count();
    const std::size_t d = batch.dim();
    const bool raw_dots = (config.kind == LossKind::Softmax);
    const double s = raw_dots ? 1.0 : config.s;
    const double cos_hi = 1.0 - kCosClamp;

    LossResult result;
    result.grad_features = Matrix(n, d);
    result.grad_weights = Matrix(c, d);
    result.target_angles.reserve(n);

    std::vector<double> logits(c);
    std::vector<double> dlogit_ddot(c);  // d z_j / d (w_j . x)
    std::vector<double> dots(c);
    double total = 0.0;

    for (std::size_t i = 0; i < n; ++i) {
        const auto x = batch.features.row(i);
        const std::size_t y = batch.labels[i];

        for (std::size_t j = 0; j < c; ++j) dots[j] = dot(weights.weights.row(j), x);

        const double cy = std::clamp(dots[y], -cos_hi, cos_hi);
        const bool y_inside = std::abs(dots[y]) < cos_hi;
        const double theta_y = std::acos(cy);
        const double sin_y = std::sqrt(1.0 - cy * cy);  // >= ~4.5e-4 by the clamp

        for (std::size_t j = 0; j < c; ++j) {
            if (j == y) continue;
            if (raw_dots) {
                logits[j] = dots[j];
                dlogit_ddot[j] = 1.0;
            } else {
                const bool inside = std::abs(dots[j]) < cos_hi;
                logits[j] = s * std::clamp(dots[j], -cos_hi, cos_hi);
                dlogit_ddot[j] = inside ? s : 0.0;
            }
        }

        // Target logit s*f(theta_y) and its derivative w.r.t. the raw dot.
        // Evaluated in cosine space where that is exact.
        switch (config.kind) {
            case LossKind::Softmax:
                logits[y] = dots[y];
                dlogit_ddot[y] = 1.0;
                break;
            case LossKind::NormFace:
                logits[y] = s * cy;
                dlogit_ddot[y] = y_inside ? s : 0.0;
                break;
            case LossKind::CosFace:
                logits[y] = s * (cy - config.m);
                dlogit_ddot[y] = y_inside ? s : 0.0;
                break;
            case LossKind::ArcFace: {
                const double u = std::clamp(theta_y + config.m, 0.0, kPi);
                logits[y] = s * std::cos(u);
                const bool arg_inside = (theta_y + config.m <= kPi);
                dlogit_ddot[y] =
                    (y_inside && arg_inside) ? s * std::sin(u) / sin_y : 0.0;
                break;
            }
            case LossKind::X2Softmax: {
                const double t = theta_y - config.h;
                logits[y] = s * (config.a * t * t + config.k);
                dlogit_ddot[y] =
                    y_inside ? -s * 2.0 * config.a * t / sin_y : 0.0;
                break;
            }
        }

        const auto ce = softmax_cross_entropy(logits, y);
        total += ce.loss;
        result.target_angles.push_back(Angle(theta_y));

        auto gx = result.grad_features.row(i);
        for (std::size_t j = 0; j < c; ++j) {
            const double coef = ce.grad[j] * dlogit_ddot[j] / static_cast<double>(n);
            if (coef == 0.0) continue;
            const auto w = weights.weights.row(j);
            auto gw = result.grad_weights.row(j);
            for (std::size_t t = 0; t < d; ++t) {
                gx[t] += coef * w[t];
                gw[t] += coef * x[t];
            }
        }
        project_tangent(gx, x);
    }

    for (std::size_t j = 0; j < c; ++j) {
        project_tangent(result.grad_weights.row(j), weights.weights.row(j));
    }

    result.loss = total / static_cast<double>(n);
    return result;
}

std::vector<SweepRow> sweep_hyperparameters(std::span<const LossConfig> grid,
                                            const EmbeddingBatch& batch,
                                            const ClassWeights& weights) {
    std::vector<SweepRow> rows;
    rows.reserve(grid.size());
    for (const auto& cfg : grid) {
        rows.push_back({cfg, forward_backward(batch, weights, cfg).loss});
    }
    return rows;
}

std::vector<LossConfig> default_sweep_grid() {
    std::vector<LossConfig> grid;
    auto x2 = [](double a, double h, double k) {
        LossConfig cfg;
        cfg.kind = LossKind::X2Softmax;
        cfg.a = a;
        cfg.h = h;
        cfg.k = k;
        return cfg;
    };
    for (double a : {-0.7, -0.9, -1.0, -1.1, -1.3}) grid.push_back(x2(a, -0.3, 1.0));
    for (double h : {-0.5, -0.4, -0.2, -0.1, 0.0}) grid.push_back(x2(-1.0, h, 1.0));
    for (double k : {0.9, 0.8, 0.7}) grid.push_back(x2(-1.0, -0.3, k));
    return grid;
}

}  // namespace marginlab
