#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "marginlab/geometry.hpp"
#include "marginlab/matrix.hpp"

namespace marginlab {

enum class LossKind { Softmax, NormFace, CosFace, ArcFace, X2Softmax };

std::string to_string(LossKind kind);
LossKind loss_kind_from_string(const std::string& name);

/// Which loss to apply and its hyperparameters.
///
/// s scales every logit before the softmax. m is the additive margin of
/// CosFace (cosine space) and ArcFace (angle space). a, h, k shape the
/// quadratic X2-Softmax logit f(theta) = a*(theta - h)^2 + k: (h, k) is the
/// vertex, a the curvature. Softmax ignores s and runs on raw dot products.
struct LossConfig {
    LossKind kind = LossKind::X2Softmax;
    double s = 64.0;
    double m = 0.5;
    double a = -1.0;
    double h = -0.3;
    double k = 1.0;

    /// Throws std::invalid_argument when a constraint is violated:
    /// s > 0; m >= 0 for CosFace/ArcFace; a < 0 and k <= 1 for X2Softmax
    /// (k > 1 would put the vertex outside the range of cos, so the
    /// opposing boundary angle acos(f) would not exist there).
    void validate() const;

    /// JSON object {"kind": "x2softmax", "s": 64.0, ...}; absent fields take
    /// the defaults above. Unknown kind names are rejected.
    static LossConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

/// Target-class logit f(theta), theta in [0, pi].
///   Softmax / NormFace:  cos(theta)
///   CosFace:             cos(theta) - m
///   ArcFace:             cos(clamp(theta + m, 0, pi))
///   X2Softmax:           a*(theta - h)^2 + k
double logit(const LossConfig& config, double theta);

/// df/dtheta, consistent with logit() everywhere. ArcFace differentiates
/// the same clamped argument, so the derivative is 0 where the clamp
/// saturates.
double logit_derivative(const LossConfig& config, double theta);

/// Batch of unit-norm feature rows with class labels.
struct EmbeddingBatch {
    Matrix features;                  // N x d, rows unit-norm within 1e-9
    std::vector<std::size_t> labels;  // size N, each < class count

    std::size_t size() const { return labels.size(); }
    std::size_t dim() const { return features.cols(); }

    /// Throws std::domain_error if shapes disagree, a row is not unit norm,
    /// or a label is >= num_classes.
    void validate(std::size_t num_classes) const;
};

/// Unit-norm class prototype rows, one per identity.
struct ClassWeights {
    Matrix weights;  // C x d

    std::size_t count() const { return weights.rows(); }
    std::size_t dim() const { return weights.cols(); }

    void validate() const;
};

struct LossResult {
    double loss = 0.0;                 // batch mean, finite and >= 0
    Matrix grad_features;              // N x d, tangent to each feature row
    Matrix grad_weights;               // C x d, tangent to each weight row
    std::vector<Angle> target_angles;  // angle of each sample to its class weight
};

/// Margin-softmax loss with exact analytic gradients.
///
/// Per sample, the target-class logit is s*f(theta_y) with theta_y the
/// (clamped) angle to the target weight; every other class contributes
/// s*cos(theta_j). The batch loss is the mean of the per-sample
/// cross-entropies. Gradients are taken w.r.t. the unit-sphere
/// representatives and tangent-projected (g <- g - (g.v)v), matching
/// finite differences along the sphere. Softmax kind uses raw dot products
/// with s fixed to 1.
///
/// Pure function; per-sample terms are reduced in index order, so results
/// are identical regardless of caller threading.
LossResult forward_backward(const EmbeddingBatch& batch, const ClassWeights& weights,
                            const LossConfig& config);

struct SweepRow {
    LossConfig config;
    double loss;
};

/// Loss landscape over a config grid on one fixed (batch, weights) pair.
/// One row per config, in input order.
std::vector<SweepRow> sweep_hyperparameters(std::span<const LossConfig> grid,
                                            const EmbeddingBatch& batch,
                                            const ClassWeights& weights);

/// The stock 13-point (a, h, k) study grid for X2Softmax.
std::vector<LossConfig> default_sweep_grid();

}  // namespace marginlab
