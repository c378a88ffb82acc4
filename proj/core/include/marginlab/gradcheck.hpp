#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "marginlab/loss.hpp"
#include "marginlab/rng.hpp"

namespace marginlab {

/// Finite-difference verification of the analytic gradients. The oracle
/// side only ever evaluates forward losses, so it is independent of the
/// backward code it checks.

/// |fd - an| / max(|fd|, |an|, floor). The floor absorbs components below
/// what central differences at the given step can resolve (loss roundoff
/// ~1e-15 divided by 2e-5 leaves ~1e-10 of absolute noise).
double gradcheck_rel_err(double fd, double an, double floor_scale = 1e-3);

/// Orthonormal basis of the tangent space at unit vector v, built from the
/// coordinate axes by Gram-Schmidt.
std::vector<std::vector<double>> tangent_basis(std::span<const double> v);

struct FdResult {
    double max_rel_err = 0.0;
    std::string worst;  // location of the worst component
};

/// Central differences along the sphere: each feature/weight row is
/// perturbed along its tangent basis and re-normalized, matching the
/// tangent-projected analytic gradients.
FdResult fd_check(const EmbeddingBatch& batch, const ClassWeights& weights,
                  const LossConfig& config, double step = 1e-5);

struct GradCheckInstance {
    EmbeddingBatch batch;
    ClassWeights weights;
    LossConfig config;
};

/// Random loss instance with every target angle confined to
/// [0.1, pi - 0.1] (rejection sampling on the feature rows).
GradCheckInstance random_gradcheck_instance(LossKind kind, Rng& rng);

struct GradCheckSummary {
    double max_rel_err = 0.0;
    std::string worst;
    std::size_t trials = 0;
    bool passed(double tolerance = 1e-5) const { return max_rel_err < tolerance; }
};

/// trials seeded random instances of one loss kind.
GradCheckSummary gradient_check(LossKind kind, std::size_t trials, std::uint64_t seed);

}  // namespace marginlab
