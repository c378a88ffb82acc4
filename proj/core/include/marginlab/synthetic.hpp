#pragma once

#include <cstdint>
#include <iosfwd>

#include <nlohmann/json_fwd.hpp>

#include "marginlab/loss.hpp"
#include "marginlab/matrix.hpp"

namespace marginlab {

/// Recipe for a seeded classification dataset on the unit sphere.
/// samples_per_class is the size of the largest class; with
/// class_imbalance_ratio r > 1, class sizes interpolate geometrically from
/// samples_per_class down to samples_per_class / r.
struct SyntheticSpec {
    std::size_t num_classes = 8;
    std::size_t samples_per_class = 120;
    std::size_t input_dim = 2;
    double angular_noise_std = 0.15;     // radians, > 0
    double class_imbalance_ratio = 1.0;  // max/min class size, >= 1
    std::uint64_t seed = 1;

    void validate() const;
    static SyntheticSpec from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

struct SyntheticDataset {
    EmbeddingBatch data;      // unit-norm rows, labels in [0, num_classes)
    Matrix class_directions;  // C x d ground truth
};

/// Class directions are drawn uniformly on the sphere, then each sample is
/// its class direction rotated by |Normal(0, noise_std)| radians about a
/// uniformly random tangent direction and renormalized. The draw order is
/// pinned (all directions first, then samples class by class), so identical
/// specs give bit-identical datasets.
SyntheticDataset generate(const SyntheticSpec& spec);

/// CSV "label,x0,x1,...", one sample per row, full double precision.
void write_dataset_csv(std::ostream& out, const EmbeddingBatch& data);
EmbeddingBatch read_dataset_csv(std::istream& in);

}  // namespace marginlab
