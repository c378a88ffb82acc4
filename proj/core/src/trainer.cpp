#include "marginlab/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "marginlab/geometry.hpp"
#include "marginlab/rng.hpp"

namespace marginlab {

void TrainConfig::validate() const {
    loss.validate();
    if (embed_dim < 2) throw std::invalid_argument("TrainConfig: embed_dim must be >= 2");
    if (batch_size == 0) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw std::invalid_argument("TrainConfig: learning_rate must be > 0");
    }
    if (!(momentum >= 0.0 && momentum < 1.0)) {
        throw std::invalid_argument("TrainConfig: momentum must be in [0, 1)");
    }
    if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
        throw std::invalid_argument("TrainConfig: weight_decay must be >= 0");
    }
    if (!(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0)) {
        throw std::invalid_argument("TrainConfig: lr_decay_factor must be in (0, 1]");
    }
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    TrainConfig cfg;
    if (j.contains("loss")) cfg.loss = LossConfig::from_json(j.at("loss"));
    if (j.contains("embed_dim")) cfg.embed_dim = j.at("embed_dim").get<std::size_t>();
    if (j.contains("hidden_dim")) cfg.hidden_dim = j.at("hidden_dim").get<std::size_t>();
    if (j.contains("epochs")) cfg.epochs = j.at("epochs").get<std::size_t>();
    if (j.contains("batch_size")) cfg.batch_size = j.at("batch_size").get<std::size_t>();
    if (j.contains("learning_rate")) cfg.learning_rate = j.at("learning_rate").get<double>();
    if (j.contains("momentum")) cfg.momentum = j.at("momentum").get<double>();
    if (j.contains("weight_decay")) cfg.weight_decay = j.at("weight_decay").get<double>();
    if (j.contains("lr_decay_steps")) {
        cfg.lr_decay_steps = j.at("lr_decay_steps").get<std::vector<std::size_t>>();
    }
    if (j.contains("lr_decay_factor")) {
        cfg.lr_decay_factor = j.at("lr_decay_factor").get<double>();
    }
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.validate();
    return cfg;
}

nlohmann::json TrainConfig::to_json() const {
    return {{"loss", loss.to_json()},
            {"embed_dim", embed_dim},
            {"hidden_dim", hidden_dim},
            {"epochs", epochs},
            {"batch_size", batch_size},
            {"learning_rate", learning_rate},
            {"momentum", momentum},
            {"weight_decay", weight_decay},
            {"lr_decay_steps", lr_decay_steps},
            {"lr_decay_factor", lr_decay_factor},
            {"seed", seed}};
}

namespace {

Matrix uniform_matrix(Rng& rng, std::size_t rows, std::size_t cols, double bound) {
    Matrix m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) m(r, c) = rng.uniform(-bound, bound);
    }
    return m;
}

std::vector<double> uniform_vector(Rng& rng, std::size_t n, double bound) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(-bound, bound);
    return v;
}

// y = W x + b, one output per W row.
void affine(const Matrix& w, std::span<const double> b, std::span<const double> x,
            std::span<double> y) {
    for (std::size_t r = 0; r < w.rows(); ++r) {
        y[r] = b[r] + dot(w.row(r), x);
    }
}

struct ForwardState {
    Matrix hidden;     // post-tanh, N x hidden_dim (empty when linear)
    Matrix raw_embed;  // N x embed_dim, before normalization
    EmbeddingBatch embedded;  // normalized features + labels
};

ForwardState forward_pass(const TrainedModel& model, const Matrix& inputs,
                          const std::vector<std::size_t>& labels) {
    if (inputs.cols() != model.input_dim()) {
        throw std::domain_error("encoder: input dimension mismatch");
    }
    const std::size_t n = inputs.rows();
    const std::size_t e = model.embed_dim();

    ForwardState st;
    st.raw_embed = Matrix(n, e);
    if (model.has_hidden()) st.hidden = Matrix(n, model.hidden_weight.rows());
    st.embedded.features = Matrix(n, e);
    st.embedded.labels = labels;

    for (std::size_t i = 0; i < n; ++i) {
        std::span<const double> enc_in = inputs.row(i);
        if (model.has_hidden()) {
            auto hrow = st.hidden.row(i);
            affine(model.hidden_weight, model.hidden_bias, enc_in, hrow);
            for (auto& x : hrow) x = std::tanh(x);
            enc_in = hrow;
        }
        auto erow = st.raw_embed.row(i);
        affine(model.out_weight, model.out_bias, enc_in, erow);
        const auto unit = normalize(erow);
        auto urow = st.embedded.features.row(i);
        std::copy(unit.begin(), unit.end(), urow.begin());
    }
    return st;
}

}  // namespace

double ModelGradients::squared_norm() const {
    double acc = 0.0;
    for (double v : hidden_weight.values()) acc += v * v;
    for (double v : hidden_bias) acc += v * v;
    for (double v : out_weight.values()) acc += v * v;
    for (double v : out_bias) acc += v * v;
    for (double v : class_weights.values()) acc += v * v;
    return acc;
}

TrainedModel init_model(const TrainConfig& config, std::size_t input_dim,
                        std::size_t num_classes) {
    config.validate();
    if (input_dim == 0) throw std::invalid_argument("init_model: input_dim must be > 0");
    if (num_classes == 0) throw std::invalid_argument("init_model: num_classes must be > 0");

    Rng rng(config.seed);
    TrainedModel model;
    model.config = config;

    std::size_t out_fan_in = input_dim;
    if (config.hidden_dim > 0) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(input_dim));
        model.hidden_weight = uniform_matrix(rng, config.hidden_dim, input_dim, bound);
        model.hidden_bias = uniform_vector(rng, config.hidden_dim, bound);
        out_fan_in = config.hidden_dim;
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(out_fan_in));
    model.out_weight = uniform_matrix(rng, config.embed_dim, out_fan_in, bound);
    model.out_bias = uniform_vector(rng, config.embed_dim, bound);

    model.class_weights.weights = Matrix(num_classes, config.embed_dim);
    for (std::size_t c = 0; c < num_classes; ++c) {
        const auto w = rng.unit_vector(config.embed_dim);
        for (std::size_t t = 0; t < config.embed_dim; ++t) {
            model.class_weights.weights(c, t) = w[t];
        }
    }
    return model;
}

ModelGradients model_gradients(const TrainedModel& model, const EmbeddingBatch& batch) {
    const auto st = forward_pass(model, batch.features, batch.labels);
    const auto loss = forward_backward(st.embedded, model.class_weights, model.config.loss);

    const std::size_t n = batch.size();
    const std::size_t e = model.embed_dim();

    ModelGradients g;
    g.loss = loss.loss;
    g.class_weights = loss.grad_weights;
    g.out_weight = Matrix(model.out_weight.rows(), model.out_weight.cols());
    g.out_bias.assign(model.out_bias.size(), 0.0);
    if (model.has_hidden()) {
        g.hidden_weight = Matrix(model.hidden_weight.rows(), model.hidden_weight.cols());
        g.hidden_bias.assign(model.hidden_bias.size(), 0.0);
    }

    std::vector<double> g_embed(e);
    std::vector<double> g_hidden(model.has_hidden() ? model.hidden_weight.rows() : 0);

    for (std::size_t i = 0; i < n; ++i) {
        // d(unit)/d(raw) applied to a tangent gradient is just 1/||raw||.
        const auto g_unit = loss.grad_features.row(i);
        const double raw_norm = norm(st.raw_embed.row(i));
        for (std::size_t t = 0; t < e; ++t) g_embed[t] = g_unit[t] / raw_norm;

        const std::span<const double> enc_in =
            model.has_hidden() ? std::span<const double>(st.hidden.row(i))
                               : std::span<const double>(batch.features.row(i));
        for (std::size_t r = 0; r < e; ++r) {
            auto gw = g.out_weight.row(r);
            for (std::size_t t = 0; t < enc_in.size(); ++t) gw[t] += g_embed[r] * enc_in[t];
            g.out_bias[r] += g_embed[r];
        }

        if (model.has_hidden()) {
            const auto hrow = st.hidden.row(i);
            for (std::size_t r = 0; r < g_hidden.size(); ++r) {
                double acc = 0.0;
                for (std::size_t t = 0; t < e; ++t) acc += model.out_weight(t, r) * g_embed[t];
                g_hidden[r] = acc * (1.0 - hrow[r] * hrow[r]);  // through tanh
            }
            const auto xrow = batch.features.row(i);
            for (std::size_t r = 0; r < g_hidden.size(); ++r) {
                auto gw = g.hidden_weight.row(r);
                for (std::size_t t = 0; t < xrow.size(); ++t) gw[t] += g_hidden[r] * xrow[t];
                g.hidden_bias[r] += g_hidden[r];
            }
        }
    }
    return g;
}

namespace {

void sgd_update(Matrix& param, Matrix& velocity, const Matrix& grad, double lr, double mom,
                double wd) {
    double* p = param.data();
    double* v = velocity.data();
    const double* g = grad.data();
    const std::size_t count = param.rows() * param.cols();
    for (std::size_t i = 0; i < count; ++i) {
        const double step = g[i] + wd * p[i];
        v[i] = mom * v[i] + step;
        p[i] -= lr * v[i];
    }
}

void sgd_update(std::vector<double>& param, std::vector<double>& velocity,
                const std::vector<double>& grad, double lr, double mom, double wd) {
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double step = grad[i] + wd * param[i];
        velocity[i] = mom * velocity[i] + step;
        param[i] -= lr * velocity[i];
    }
}

}  // namespace

TrainedModel train(const EmbeddingBatch& data, const TrainConfig& config,
                   const StepObserver& observer) {
    config.validate();
    if (data.size() == 0) throw std::invalid_argument("train: empty dataset");
    std::size_t num_classes = 0;
    for (auto label : data.labels) num_classes = std::max(num_classes, label + 1);
    data.validate(num_classes);

    TrainedModel model = init_model(config, data.dim(), num_classes);

    Matrix v_hidden(model.hidden_weight.rows(), model.hidden_weight.cols());
    std::vector<double> v_hbias(model.hidden_bias.size(), 0.0);
    Matrix v_out(model.out_weight.rows(), model.out_weight.cols());
    std::vector<double> v_obias(model.out_bias.size(), 0.0);
    Matrix v_class(model.class_weights.weights.rows(), model.class_weights.weights.cols());

    Rng shuffle_rng(config.seed ^ 0x9e3779b97f4a7c15ull);  // separate stream from init
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    double lr = config.learning_rate;
    std::size_t step = 0;
    const std::size_t n = data.size();

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        for (std::size_t start = 0; start < n; start += config.batch_size) {
            ++step;
            if (std::find(config.lr_decay_steps.begin(), config.lr_decay_steps.end(), step) !=
                config.lr_decay_steps.end()) {
                lr *= config.lr_decay_factor;
            }

            const std::size_t count = std::min(config.batch_size, n - start);
            EmbeddingBatch batch;
            batch.features = Matrix(count, data.dim());
            batch.labels.resize(count);
            for (std::size_t b = 0; b < count; ++b) {
                const std::size_t src = order[start + b];
                const auto row = data.features.row(src);
                std::copy(row.begin(), row.end(), batch.features.row(b).begin());
                batch.labels[b] = data.labels[src];
            }

            ModelGradients grads;
            try {
                grads = model_gradients(model, batch);
            } catch (const std::domain_error& e) {
                // Parameters blew past the finite range (zero or non-finite
                // encoder outputs); report it as divergence at this step.
                throw TrainingError("training diverged at step " + std::to_string(step) +
                                        ": " + e.what(),
                                    step);
            }
            if (!std::isfinite(grads.loss)) {
                throw TrainingError("training diverged: non-finite loss at step " +
                                        std::to_string(step),
                                    step);
            }

            if (model.has_hidden()) {
                sgd_update(model.hidden_weight, v_hidden, grads.hidden_weight, lr,
                           config.momentum, config.weight_decay);
                sgd_update(model.hidden_bias, v_hbias, grads.hidden_bias, lr, config.momentum,
                           config.weight_decay);
            }
            sgd_update(model.out_weight, v_out, grads.out_weight, lr, config.momentum,
                       config.weight_decay);
            sgd_update(model.out_bias, v_obias, grads.out_bias, lr, config.momentum,
                       config.weight_decay);
            sgd_update(model.class_weights.weights, v_class, grads.class_weights, lr,
                       config.momentum, config.weight_decay);

            // Keep class prototypes on the sphere.
            auto& cw = model.class_weights.weights;
            for (std::size_t c = 0; c < cw.rows(); ++c) {
                const auto unit = normalize(cw.row(c));
                std::copy(unit.begin(), unit.end(), cw.row(c).begin());
            }

            model.history.push_back({step, grads.loss, lr});
            if (observer) observer(model.history.back(), model);
        }
    }
    return model;
}

Matrix embed(const TrainedModel& model, const Matrix& inputs) {
    std::vector<std::size_t> dummy_labels(inputs.rows(), 0);
    return forward_pass(model, inputs, dummy_labels).embedded.features;
}

std::vector<std::pair<std::size_t, double>> intra_class_angular_std(const TrainedModel& model,
                                                                    const EmbeddingBatch& data) {
    const Matrix features = embed(model, data.features);

    std::map<std::size_t, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < data.size(); ++i) by_class[data.labels[i]].push_back(i);

    std::vector<std::pair<std::size_t, double>> out;
    out.reserve(by_class.size());
    for (const auto& [label, members] : by_class) {
        if (members.size() < 2) {
            throw std::domain_error("intra_class_angular_std: class " + std::to_string(label) +
                                    " has fewer than 2 samples");
        }
        std::vector<double> mean(features.cols(), 0.0);
        for (auto i : members) {
            const auto row = features.row(i);
            for (std::size_t t = 0; t < mean.size(); ++t) mean[t] += row[t];
        }
        const auto center = normalize(mean);
        double acc = 0.0;
        for (auto i : members) {
            const double ang = angle_between(features.row(i), center).radians();
            acc += ang * ang;
        }
        out.emplace_back(label, std::sqrt(acc / static_cast<double>(members.size())));
    }
    return out;
}

void write_history_csv(std::ostream& out, const std::vector<StepRecord>& history) {
    out << "step,loss,lr\n";
    char buf[96];
    for (const auto& rec : history) {
        std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g\n", rec.step, rec.loss, rec.lr);
        out << buf;
    }
}

namespace {

nlohmann::json matrix_to_json(const Matrix& m) {
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.values()}};
}

Matrix matrix_from_json(const nlohmann::json& j) {
    return Matrix::from_rows(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                             j.at("data").get<std::vector<double>>());
}

}  // namespace

nlohmann::json TrainedModel::to_json() const {
    nlohmann::json j;
    j["config"] = config.to_json();
    j["hidden_weight"] = matrix_to_json(hidden_weight);
    j["hidden_bias"] = hidden_bias;
    j["out_weight"] = matrix_to_json(out_weight);
    j["out_bias"] = out_bias;
    j["class_weights"] = matrix_to_json(class_weights.weights);
    return j;
}

TrainedModel TrainedModel::from_json(const nlohmann::json& j) {
    TrainedModel model;
    model.config = TrainConfig::from_json(j.at("config"));
    model.hidden_weight = matrix_from_json(j.at("hidden_weight"));
    model.hidden_bias = j.at("hidden_bias").get<std::vector<double>>();
    model.out_weight = matrix_from_json(j.at("out_weight"));
    model.out_bias = j.at("out_bias").get<std::vector<double>>();
    model.class_weights.weights = matrix_from_json(j.at("class_weights"));
    return model;
}

}  // namespace marginlab
