#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "marginlab/loss.hpp"
#include "marginlab/matrix.hpp"

namespace marginlab {

/// SGD-with-momentum recipe for the toy encoder.
struct TrainConfig {
    LossConfig loss;
    std::size_t embed_dim = 2;
    std::size_t hidden_dim = 0;  // 0 = linear encoder, else one tanh layer
    std::size_t epochs = 50;
    std::size_t batch_size = 64;
    double learning_rate = 0.02;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    std::vector<std::size_t> lr_decay_steps;  // 1-based global step indices
    double lr_decay_factor = 0.1;
    std::uint64_t seed = 1;

    void validate() const;
    static TrainConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

struct StepRecord {
    std::size_t step;  // 1-based
    double loss;
    double lr;
};

/// Affine (or one-hidden-layer tanh) encoder plus unit-norm class weights.
/// Encoder output is row-normalized onto the sphere before the loss.
struct TrainedModel {
    TrainConfig config;
    Matrix hidden_weight;             // hidden_dim x input_dim; empty when linear
    std::vector<double> hidden_bias;  // hidden_dim
    Matrix out_weight;                // embed_dim x (hidden_dim or input_dim)
    std::vector<double> out_bias;     // embed_dim
    ClassWeights class_weights;       // C x embed_dim
    std::vector<StepRecord> history;  // one record per SGD step

    bool has_hidden() const { return hidden_weight.rows() > 0; }
    std::size_t input_dim() const {
        return has_hidden() ? hidden_weight.cols() : out_weight.cols();
    }
    std::size_t embed_dim() const { return out_weight.rows(); }

    /// Shapes + row-major parameter arrays + config echo. History is not
    /// serialized; it is exported separately as CSV.
    nlohmann::json to_json() const;
    static TrainedModel from_json(const nlohmann::json& j);
};

/// Training diverged (non-finite loss). step() is the 1-based SGD step at
/// which it happened.
class TrainingError : public std::runtime_error {
public:
    TrainingError(const std::string& msg, std::size_t step)
        : std::runtime_error(msg), step_(step) {}
    std::size_t step() const { return step_; }

private:
    std::size_t step_;
};

/// Gradients of the mean batch loss w.r.t. every trainable tensor.
struct ModelGradients {
    Matrix hidden_weight;
    std::vector<double> hidden_bias;
    Matrix out_weight;
    std::vector<double> out_bias;
    Matrix class_weights;  // tangent-projected per row
    double loss = 0.0;

    double squared_norm() const;
};

/// Seeded initial model: affine weights and biases uniform in
/// (-1/sqrt(fan_in), 1/sqrt(fan_in)), class weights random unit rows.
/// Draw order is pinned for reproducibility.
TrainedModel init_model(const TrainConfig& config, std::size_t input_dim,
                        std::size_t num_classes);

/// Forward + backward on one batch. Exposed for gradient inspection.
ModelGradients model_gradients(const TrainedModel& model, const EmbeddingBatch& batch);

using StepObserver = std::function<void(const StepRecord&, const TrainedModel&)>;

/// Runs epochs * ceil(N / batch_size) SGD-with-momentum steps over seeded
/// shuffles of the data. Class-weight rows are renormalized after every
/// step. Deterministic given (data, config). Throws TrainingError on a
/// non-finite loss. The class count is max(label) + 1.
TrainedModel train(const EmbeddingBatch& data, const TrainConfig& config,
                   const StepObserver& observer = {});

/// Forward pass then row normalization; every output row is unit norm.
/// Throws std::domain_error on dimension mismatch or a zero encoder output.
Matrix embed(const TrainedModel& model, const Matrix& inputs);

/// Per class: embed its samples, normalize the mean feature, and return
/// sqrt(mean(angle(sample, mean)^2)) - the angular spread about the mean
/// direction, in radians. Pairs (label, spread) sorted by label. Every class
/// present must have at least 2 samples.
std::vector<std::pair<std::size_t, double>> intra_class_angular_std(const TrainedModel& model,
                                                                    const EmbeddingBatch& data);

/// CSV "step,loss,lr", one row per SGD step.
void write_history_csv(std::ostream& out, const std::vector<StepRecord>& history);

}  // namespace marginlab
