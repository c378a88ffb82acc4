#include "marginlab/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "marginlab/geometry.hpp"
#include "marginlab/rng.hpp"

namespace marginlab {

void SyntheticSpec::validate() const {
    if (num_classes == 0) throw std::invalid_argument("SyntheticSpec: num_classes must be > 0");
    if (samples_per_class == 0) {
        throw std::invalid_argument("SyntheticSpec: samples_per_class must be > 0");
    }
    if (input_dim < 2) throw std::invalid_argument("SyntheticSpec: input_dim must be >= 2");
    if (!(angular_noise_std > 0.0) || !std::isfinite(angular_noise_std)) {
        throw std::invalid_argument("SyntheticSpec: angular_noise_std must be > 0");
    }
    if (!(class_imbalance_ratio >= 1.0) || !std::isfinite(class_imbalance_ratio)) {
        throw std::invalid_argument("SyntheticSpec: class_imbalance_ratio must be >= 1");
    }
}

SyntheticSpec SyntheticSpec::from_json(const nlohmann::json& j) {
    SyntheticSpec spec;
    if (j.contains("num_classes")) spec.num_classes = j.at("num_classes").get<std::size_t>();
    if (j.contains("samples_per_class")) {
        spec.samples_per_class = j.at("samples_per_class").get<std::size_t>();
    }
    if (j.contains("input_dim")) spec.input_dim = j.at("input_dim").get<std::size_t>();
    if (j.contains("angular_noise_std")) {
        spec.angular_noise_std = j.at("angular_noise_std").get<double>();
    }
    if (j.contains("class_imbalance_ratio")) {
        spec.class_imbalance_ratio = j.at("class_imbalance_ratio").get<double>();
    }
    if (j.contains("seed")) spec.seed = j.at("seed").get<std::uint64_t>();
    spec.validate();
    return spec;
}

nlohmann::json SyntheticSpec::to_json() const {
    return {{"num_classes", num_classes},
            {"samples_per_class", samples_per_class},
            {"input_dim", input_dim},
            {"angular_noise_std", angular_noise_std},
            {"class_imbalance_ratio", class_imbalance_ratio},
            {"seed", seed}};
}

namespace {

std::vector<std::size_t> class_sizes(const SyntheticSpec& spec) {
    std::vector<std::size_t> sizes(spec.num_classes, spec.samples_per_class);
    if (spec.class_imbalance_ratio == 1.0 || spec.num_classes == 1) return sizes;
    const double c_max = static_cast<double>(spec.num_classes - 1);
    for (std::size_t c = 0; c < spec.num_classes; ++c) {
        const double factor =
            std::pow(spec.class_imbalance_ratio, -static_cast<double>(c) / c_max);
        sizes[c] = static_cast<std::size_t>(
            std::llround(static_cast<double>(spec.samples_per_class) * factor));
        if (sizes[c] == 0) sizes[c] = 1;
    }
    return sizes;
}

}  // namespace

SyntheticDataset generate(const SyntheticSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    const std::size_t d = spec.input_dim;

    SyntheticDataset out;
    out.class_directions = Matrix(spec.num_classes, d);
    for (std::size_t c = 0; c < spec.num_classes; ++c) {
        const auto dir = rng.unit_vector(d);
        for (std::size_t t = 0; t < d; ++t) out.class_directions(c, t) = dir[t];
    }

    const auto sizes = class_sizes(spec);
    std::size_t total = 0;
    for (auto s : sizes) total += s;

    out.data.features = Matrix(total, d);
    out.data.labels.reserve(total);

    std::size_t row = 0;
    std::vector<double> tangent(d);
    for (std::size_t c = 0; c < spec.num_classes; ++c) {
        const auto mu = out.class_directions.row(c);
        for (std::size_t i = 0; i < sizes[c]; ++i) {
            const double alpha = std::abs(rng.normal()) * spec.angular_noise_std;
            // Random unit tangent at mu.
            double tnorm = 0.0;
            do {
                for (auto& x : tangent) x = rng.normal();
                const double radial = dot(tangent, mu);
                for (std::size_t t = 0; t < d; ++t) tangent[t] -= radial * mu[t];
                tnorm = norm(tangent);
            } while (tnorm < 1e-12);

            const double ca = std::cos(alpha);
            const double sa = std::sin(alpha);
            auto sample = out.data.features.row(row);
            for (std::size_t t = 0; t < d; ++t) {
                sample[t] = ca * mu[t] + sa * tangent[t] / tnorm;
            }
            const double n = norm(sample);
            for (std::size_t t = 0; t < d; ++t) sample[t] /= n;

            out.data.labels.push_back(c);
            ++row;
        }
    }
    return out;
}

void write_dataset_csv(std::ostream& out, const EmbeddingBatch& data) {
    out << "label";
    for (std::size_t t = 0; t < data.dim(); ++t) out << ",x" << t;
    out << "\n";
    char buf[64];
    for (std::size_t i = 0; i < data.size(); ++i) {
        out << data.labels[i];
        const auto row = data.features.row(i);
        for (double v : row) {
            std::snprintf(buf, sizeof(buf), ",%.17g", v);
            out << buf;
        }
        out << "\n";
    }
}

EmbeddingBatch read_dataset_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) {
        throw std::runtime_error("read_dataset_csv: missing header");
    }
    std::size_t dim = 0;
    for (char ch : line) {
        if (ch == ',') ++dim;
    }
    if (dim == 0) throw std::runtime_error("read_dataset_csv: header has no feature columns");

    std::vector<std::size_t> labels;
    std::vector<double> values;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream row(line);
        std::string cell;
        if (!std::getline(row, cell, ',')) {
            throw std::runtime_error("read_dataset_csv: malformed row");
        }
        const long long label = std::stoll(cell);
        if (label < 0) throw std::runtime_error("read_dataset_csv: negative label");
        labels.push_back(static_cast<std::size_t>(label));
        std::size_t got = 0;
        while (std::getline(row, cell, ',')) {
            values.push_back(std::stod(cell));
            ++got;
        }
        if (got != dim) {
            throw std::runtime_error("read_dataset_csv: row width does not match header");
        }
    }

    EmbeddingBatch batch;
    batch.features = Matrix::from_rows(labels.size(), dim, std::move(values));
    batch.labels = std::move(labels);
    return batch;
}

}  // namespace marginlab
