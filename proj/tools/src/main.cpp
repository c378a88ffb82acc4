#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "manifest.hpp"
#include "marginlab/gradcheck.hpp"
#include "marginlab/margin.hpp"
#include "marginlab/rng.hpp"
#include "marginlab/synthetic.hpp"
#include "marginlab/trainer.hpp"
#include "marginlab/verify.hpp"

namespace fs = std::filesystem;
using namespace marginlab;
using marginlab::cli::IoError;
using marginlab::cli::read_text;
using marginlab::cli::RunManifest;
using marginlab::cli::write_text_atomic;

namespace {

class Stopwatch {
public:
    double ms() const {
        return std::chrono::duration<double, std::milli>(
                   std::chrono::steady_clock::now() - start_)
            .count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

nlohmann::json parse_json_file(const std::string& path) {
    return nlohmann::json::parse(read_text(path));
}

/// Loss hyperparameter flags shared by several subcommands. Precedence:
/// defaults, then --config JSON, then explicit flags.
struct LossFlags {
    std::string kind;
    double s = 0, m = 0, a = 0, h = 0, k = 0;
    std::string config_path;
    CLI::Option* o_kind = nullptr;
    CLI::Option* o_s = nullptr;
    CLI::Option* o_m = nullptr;
    CLI::Option* o_a = nullptr;
    CLI::Option* o_h = nullptr;
    CLI::Option* o_k = nullptr;

    void attach(CLI::App* cmd) {
        o_kind = cmd->add_option("--kind", kind,
                                 "loss kind: softmax|normface|cosface|arcface|x2softmax");
        o_s = cmd->add_option("--s", s, "logit scale s");
        o_m = cmd->add_option("--m", m, "margin m (cosface/arcface)");
        o_a = cmd->add_option("--a", a, "quadratic curvature a (x2softmax)");
        o_h = cmd->add_option("--h", h, "vertex angle h (x2softmax)");
        o_k = cmd->add_option("--k", k, "vertex height k (x2softmax)");
        cmd->add_option("--config", config_path, "loss config JSON file");
    }

    LossConfig resolve() const {
        LossConfig cfg;
        if (!config_path.empty()) cfg = LossConfig::from_json(parse_json_file(config_path));
        if (o_kind->count() > 0) cfg.kind = loss_kind_from_string(kind);
        if (o_s->count() > 0) cfg.s = s;
        if (o_m->count() > 0) cfg.m = m;
        if (o_a->count() > 0) cfg.a = a;
        if (o_h->count() > 0) cfg.h = h;
        if (o_k->count() > 0) cfg.k = k;
        cfg.validate();
        return cfg;
    }
};

EmbeddingBatch load_dataset(const std::string& path) {
    std::istringstream in(read_text(path));
    return read_dataset_csv(in);
}

std::vector<VerificationPair> read_pairs_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("pairs file: missing header");
    std::vector<VerificationPair> pairs;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        VerificationPair p{};
        unsigned long long i = 0, j = 0;
        int same = 0;
        if (std::sscanf(line.c_str(), "%llu,%llu,%d", &i, &j, &same) != 3) {
            throw std::runtime_error("pairs file: malformed row: " + line);
        }
        p.i = i;
        p.j = j;
        p.same = (same != 0);
        pairs.push_back(p);
    }
    return pairs;
}

std::string format_csv_value(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

int run_curves(const LossConfig& cfg, std::size_t grid, const std::string& out) {
    Stopwatch timer;
    TraceOptions options;
    options.samples = grid;
    const auto curve = trace_margin_curve(cfg, options);

    std::ostringstream margin_csv;
    curve.write_csv(margin_csv);

    std::ostringstream logit_csv;
    logit_csv << "theta_rad,f_theta,cos_theta\n";
    for (std::size_t i = 0; i < grid; ++i) {
        const double theta = kPi * static_cast<double>(i) / static_cast<double>(grid - 1);
        logit_csv << format_csv_value(theta) << ',' << format_csv_value(logit(cfg, theta))
                  << ',' << format_csv_value(std::cos(theta)) << "\n";
    }

    const fs::path out_path(out);
    fs::path logit_path = out_path.parent_path() /
                          (out_path.stem().string() + "_logit" + out_path.extension().string());
    write_text_atomic(out_path, margin_csv.str());
    write_text_atomic(logit_path, logit_csv.str());

    RunManifest manifest;
    manifest.command = "curves";
    manifest.config = {{"loss", cfg.to_json()}, {"grid", grid}};
    manifest.outputs = {{"curve", out_path.string()}, {"logit_curve", logit_path.string()}};
    manifest.duration_ms = timer.ms();
    manifest.write(out_path.string() + ".manifest.json");

    std::cout << "curves: " << curve.points.size() << " points, " << curve.excluded
              << " grid points outside the valid domain -> " << out_path.string() << "\n";
    return 0;
}

int run_gradcheck(const std::vector<LossKind>& kinds, std::size_t trials, std::uint64_t seed,
                  const std::string& out) {
    Stopwatch timer;
    double worst = 0.0;
    std::string worst_case;
    nlohmann::json per_kind = nlohmann::json::array();
    for (auto kind : kinds) {
        const auto summary = gradient_check(kind, trials, seed);
        std::printf("gradcheck %-10s trials=%zu  max_rel_err=%.3e\n",
                    to_string(kind).c_str(), summary.trials, summary.max_rel_err);
        per_kind.push_back({{"kind", to_string(kind)},
                            {"max_rel_err", summary.max_rel_err},
                            {"worst", summary.worst}});
        if (summary.max_rel_err > worst) {
            worst = summary.max_rel_err;
            worst_case = summary.worst;
        }
    }
    const bool ok = worst < 1e-5;
    std::printf("gradcheck overall max_rel_err=%.3e (%s)\n", worst, ok ? "pass" : "FAIL");
    if (!worst_case.empty()) std::printf("worst case: %s\n", worst_case.c_str());

    if (!out.empty()) {
        const nlohmann::json report{{"trials", trials},
                                    {"seed", seed},
                                    {"tolerance", 1e-5},
                                    {"max_rel_err", worst},
                                    {"per_kind", per_kind},
                                    {"passed", ok}};
        write_text_atomic(out, report.dump(2) + "\n");
        RunManifest manifest;
        manifest.command = "gradcheck";
        manifest.config = {{"trials", trials}, {"seed", seed}};
        manifest.outputs = {{"report", out}};
        manifest.seed = seed;
        manifest.duration_ms = timer.ms();
        manifest.write(out + ".manifest.json");
    }
    return ok ? 0 : 1;
}

int run_gen_data(const SyntheticSpec& spec, const std::string& out) {
    Stopwatch timer;
    const auto ds = generate(spec);
    std::ostringstream csv;
    write_dataset_csv(csv, ds.data);
    write_text_atomic(out, csv.str());

    RunManifest manifest;
    manifest.command = "gen-data";
    manifest.config = spec.to_json();
    manifest.outputs = {{"data", out}};
    manifest.seed = spec.seed;
    manifest.duration_ms = timer.ms();
    manifest.write(out + ".manifest.json");

    std::cout << "gen-data: " << ds.data.size() << " samples, " << ds.class_directions.rows()
              << " classes -> " << out << "\n";
    return 0;
}

int run_train(const std::string& config_path, const std::string& data_path,
              const std::string& out_dir, const CLI::Option* seed_opt, std::uint64_t seed) {
    Stopwatch timer;
    TrainConfig cfg;
    if (!config_path.empty()) cfg = TrainConfig::from_json(parse_json_file(config_path));
    if (seed_opt->count() > 0) cfg.seed = seed;
    cfg.validate();

    const auto data = load_dataset(data_path);
    const auto model = train(data, cfg);

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir + ": " + ec.message());

    const fs::path dir(out_dir);
    const auto model_path = dir / "model.json";
    const auto history_path = dir / "history.csv";
    write_text_atomic(model_path, model.to_json().dump(2) + "\n");
    std::ostringstream history;
    write_history_csv(history, model.history);
    write_text_atomic(history_path, history.str());

    RunManifest manifest;
    manifest.command = "train";
    manifest.config = cfg.to_json();
    manifest.inputs = {{"data", data_path}};
    manifest.outputs = {{"model", model_path.string()}, {"history", history_path.string()}};
    manifest.seed = cfg.seed;
    manifest.duration_ms = timer.ms();
    manifest.write((dir / "manifest.json").string());

    const double final_loss = model.history.empty() ? 0.0 : model.history.back().loss;
    std::cout << "train: " << model.history.size() << " steps, final loss " << final_loss
              << " -> " << out_dir << "\n";
    return 0;
}

int run_eval(const std::string& model_path, const std::string& data_path,
             const std::string& pairs_path, const std::string& scores_path,
             const std::string& out_dir, std::uint64_t seed, std::vector<double> fars,
             std::size_t bins) {
    Stopwatch timer;

    PairScoreSet scores;
    nlohmann::json source;
    if (!scores_path.empty()) {
        std::istringstream in(read_text(scores_path));
        scores = read_scores_csv(in);
        source = {{"scores", scores_path}};
    } else {
        if (model_path.empty() || data_path.empty()) {
            throw std::invalid_argument("eval needs either --scores or --model with --data");
        }
        const auto model = TrainedModel::from_json(parse_json_file(model_path));
        const auto data = load_dataset(data_path);
        const auto features = embed(model, data.features);
        std::vector<VerificationPair> pairs;
        if (!pairs_path.empty()) {
            pairs = read_pairs_csv(read_text(pairs_path));
            source = {{"model", model_path}, {"data", data_path}, {"pairs", pairs_path}};
        } else {
            pairs = make_verification_pairs(data.labels, seed);
            source = {{"model", model_path}, {"data", data_path}};
        }
        scores = score_pairs(features, pairs);
    }
    scores.validate();

    const auto accuracy = best_threshold_accuracy(scores);
    const auto histogram = score_histogram(scores, bins);

    nlohmann::json tar_entries = nlohmann::json::array();
    for (double far : fars) {
        const auto r = tar_at_far(scores, far);
        tar_entries.push_back({{"far_target", r.far_target},
                               {"tar", r.tar},
                               {"threshold", r.threshold},
                               {"achieved_far", r.achieved_far},
                               {"below_resolution", r.below_resolution}});
    }

    const nlohmann::json metrics{
        {"num_positive", scores.positive.size()},
        {"num_negative", scores.negative.size()},
        {"accuracy", accuracy.accuracy},
        {"accuracy_threshold", accuracy.threshold},
        {"histogram_bins", bins},
        {"overlap", histogram.overlap},
        {"tar_at_far", tar_entries}};

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir + ": " + ec.message());
    const fs::path dir(out_dir);

    write_text_atomic(dir / "metrics.json", metrics.dump(2) + "\n");
    std::ostringstream hist_csv;
    histogram.write_csv(hist_csv);
    write_text_atomic(dir / "histogram.csv", hist_csv.str());
    std::ostringstream scores_csv;
    write_scores_csv(scores_csv, scores);
    write_text_atomic(dir / "scores.csv", scores_csv.str());

    RunManifest manifest;
    manifest.command = "eval";
    manifest.config = {{"far_targets", fars}, {"bins", bins}, {"seed", seed}};
    manifest.inputs = source;
    manifest.outputs = {{"metrics", (dir / "metrics.json").string()},
                        {"histogram", (dir / "histogram.csv").string()},
                        {"scores", (dir / "scores.csv").string()}};
    manifest.seed = seed;
    manifest.duration_ms = timer.ms();
    manifest.write((dir / "manifest.json").string());

    std::cout << "eval: accuracy " << accuracy.accuracy << ", overlap " << histogram.overlap
              << " -> " << out_dir << "\n";
    return 0;
}

int run_sweep(const std::string& config_path, const std::string& data_path,
              std::uint64_t seed, const std::string& out_dir) {
    Stopwatch timer;

    std::vector<LossConfig> grid;
    if (!config_path.empty()) {
        const auto j = parse_json_file(config_path);
        if (!j.contains("grid") || !j.at("grid").is_array()) {
            throw std::invalid_argument("sweep config must contain a \"grid\" array");
        }
        for (const auto& entry : j.at("grid")) grid.push_back(LossConfig::from_json(entry));
    } else {
        grid = default_sweep_grid();
    }

    EmbeddingBatch data;
    nlohmann::json data_source;
    if (!data_path.empty()) {
        data = load_dataset(data_path);
        data_source = data_path;
    } else {
        SyntheticSpec spec;
        spec.seed = seed;
        data = generate(spec).data;
        data_source = spec.to_json();
    }

    std::size_t num_classes = 0;
    for (auto label : data.labels) num_classes = std::max(num_classes, label + 1);
    Rng rng(seed);
    ClassWeights weights;
    weights.weights = Matrix(num_classes, data.dim());
    for (std::size_t c = 0; c < num_classes; ++c) {
        const auto w = rng.unit_vector(data.dim());
        std::copy(w.begin(), w.end(), weights.weights.row(c).begin());
    }

    const auto rows = sweep_hyperparameters(grid, data, weights);

    std::ostringstream csv;
    csv << "kind,s,m,a,h,k,loss\n";
    for (const auto& row : rows) {
        const auto& c = row.config;
        const bool has_m = c.kind == LossKind::CosFace || c.kind == LossKind::ArcFace;
        const bool has_quad = c.kind == LossKind::X2Softmax;
        csv << to_string(c.kind) << ',' << format_csv_value(c.s) << ','
            << (has_m ? format_csv_value(c.m) : "") << ','
            << (has_quad ? format_csv_value(c.a) : "") << ','
            << (has_quad ? format_csv_value(c.h) : "") << ','
            << (has_quad ? format_csv_value(c.k) : "") << ','
            << format_csv_value(row.loss) << "\n";
    }

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir + ": " + ec.message());
    const fs::path dir(out_dir);
    write_text_atomic(dir / "sweep.csv", csv.str());

    RunManifest manifest;
    manifest.command = "sweep";
    manifest.config = {{"rows", grid.size()}, {"seed", seed}, {"data", data_source}};
    if (!data_path.empty()) manifest.inputs = {{"data", data_path}};
    manifest.outputs = {{"sweep", (dir / "sweep.csv").string()}};
    manifest.seed = seed;
    manifest.duration_ms = timer.ms();
    manifest.write((dir / "manifest.json").string());

    std::cout << "sweep: " << rows.size() << " configs -> " << out_dir << "\n";
    return 0;
}

int run_margin_report(const LossConfig& cfg, std::size_t samples, const std::string& out) {
    Stopwatch timer;
    const auto report = monotonicity_report(cfg, samples);

    nlohmann::json j{{"loss", cfg.to_json()},
                     {"samples", report.samples},
                     {"classification", to_string(report.classification)},
                     {"theta_range", {report.range.min, report.range.max}}};
    if (report.evidence) {
        j["evidence"] = {{"theta_a", report.evidence->theta_a},
                         {"margin_a", report.evidence->margin_a},
                         {"theta_b", report.evidence->theta_b},
                         {"margin_b", report.evidence->margin_b}};
    } else {
        j["evidence"] = nullptr;
    }

    std::cout << j.dump(2) << "\n";
    if (!out.empty()) {
        write_text_atomic(out, j.dump(2) + "\n");
        RunManifest manifest;
        manifest.command = "margin-report";
        manifest.config = {{"loss", cfg.to_json()}, {"samples", samples}};
        manifest.outputs = {{"report", out}};
        manifest.duration_ms = timer.ms();
        manifest.write(out + ".manifest.json");
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"angular-margin loss laboratory: margin curves, gradient checks, "
                 "synthetic training and verification metrics"};
    app.require_subcommand(1);
    int exit_code = 0;

    // curves
    auto* curves = app.add_subcommand("curves", "export margin and logit curve CSVs");
    LossFlags curves_loss;
    curves_loss.attach(curves);
    std::size_t curves_grid = 1024;
    std::string curves_out;
    curves->add_option("--grid", curves_grid, "number of theta1 grid samples");
    curves->add_option("--out", curves_out, "margin curve CSV path")->required();
    curves->callback(
        [&] { exit_code = run_curves(curves_loss.resolve(), curves_grid, curves_out); });

    // gradcheck
    auto* gradcheck = app.add_subcommand("gradcheck",
                                         "compare analytic gradients with finite differences");
    std::string gc_kind;
    std::size_t gc_trials = 100;
    std::uint64_t gc_seed = 1;
    std::string gc_out;
    gradcheck->add_option("--kind", gc_kind, "single loss kind (default: all five)");
    gradcheck->add_option("--trials", gc_trials, "random instances per kind");
    gradcheck->add_option("--seed", gc_seed, "RNG seed");
    gradcheck->add_option("--out", gc_out, "optional JSON report path");
    gradcheck->callback([&] {
        if (gc_trials == 0) throw CLI::ValidationError("--trials must be >= 1");
        std::vector<LossKind> kinds;
        if (gc_kind.empty()) {
            kinds = {LossKind::Softmax, LossKind::NormFace, LossKind::CosFace,
                     LossKind::ArcFace, LossKind::X2Softmax};
        } else {
            kinds = {loss_kind_from_string(gc_kind)};
        }
        exit_code = run_gradcheck(kinds, gc_trials, gc_seed, gc_out);
    });

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate a seeded dataset on the unit sphere");
    SyntheticSpec gen_spec;
    std::string gen_config, gen_out;
    auto* g_classes = gen->add_option("--classes", gen_spec.num_classes, "number of classes");
    auto* g_per = gen->add_option("--per-class", gen_spec.samples_per_class,
                                  "samples in the largest class");
    auto* g_dim = gen->add_option("--dim", gen_spec.input_dim, "input dimension");
    auto* g_noise =
        gen->add_option("--noise", gen_spec.angular_noise_std, "angular noise std (radians)");
    auto* g_imb = gen->add_option("--imbalance", gen_spec.class_imbalance_ratio,
                                  "max/min class size ratio");
    auto* g_seed = gen->add_option("--seed", gen_spec.seed, "RNG seed");
    gen->add_option("--config", gen_config, "SyntheticSpec JSON file");
    gen->add_option("--out", gen_out, "dataset CSV path")->required();
    gen->callback([&] {
        SyntheticSpec spec;
        if (!gen_config.empty()) spec = SyntheticSpec::from_json(parse_json_file(gen_config));
        if (g_classes->count()) spec.num_classes = gen_spec.num_classes;
        if (g_per->count()) spec.samples_per_class = gen_spec.samples_per_class;
        if (g_dim->count()) spec.input_dim = gen_spec.input_dim;
        if (g_noise->count()) spec.angular_noise_std = gen_spec.angular_noise_std;
        if (g_imb->count()) spec.class_imbalance_ratio = gen_spec.class_imbalance_ratio;
        if (g_seed->count()) spec.seed = gen_spec.seed;
        spec.validate();
        exit_code = run_gen_data(spec, gen_out);
    });

    // train
    auto* train_cmd = app.add_subcommand("train", "SGD training on a dataset CSV");
    std::string train_config, train_data, train_out;
    std::uint64_t train_seed = 1;
    train_cmd->add_option("--config", train_config, "TrainConfig JSON file");
    train_cmd->add_option("--data", train_data, "dataset CSV")->required();
    train_cmd->add_option("--out", train_out, "output directory")->required();
    auto* t_seed = train_cmd->add_option("--seed", train_seed, "override the config seed");
    train_cmd->callback(
        [&] { exit_code = run_train(train_config, train_data, train_out, t_seed, train_seed); });

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "pair-verification metrics");
    std::string eval_model, eval_data, eval_pairs, eval_scores, eval_out;
    std::uint64_t eval_seed = 1;
    std::vector<double> eval_fars{1e-2, 1e-3};
    std::size_t eval_bins = 100;
    eval_cmd->add_option("--model", eval_model, "model.json from train");
    eval_cmd->add_option("--data", eval_data, "dataset CSV");
    eval_cmd->add_option("--pairs", eval_pairs, "pair list CSV (i,j,same)");
    eval_cmd->add_option("--scores", eval_scores, "precomputed scores CSV (score,is_positive)");
    eval_cmd->add_option("--far", eval_fars, "FAR targets for TAR@FAR");
    eval_cmd->add_option("--bins", eval_bins, "histogram bin count");
    eval_cmd->add_option("--seed", eval_seed, "seed for negative pair sampling");
    eval_cmd->add_option("--out", eval_out, "output directory")->required();
    eval_cmd->callback([&] {
        exit_code = run_eval(eval_model, eval_data, eval_pairs, eval_scores, eval_out,
                             eval_seed, eval_fars, eval_bins);
    });

    // sweep
    auto* sweep_cmd = app.add_subcommand("sweep", "loss landscape over a config grid");
    std::string sweep_config, sweep_data, sweep_out;
    std::uint64_t sweep_seed = 1;
    sweep_cmd->add_option("--config", sweep_config, "JSON file with a \"grid\" array");
    sweep_cmd->add_option("--data", sweep_data, "dataset CSV (default: stock synthetic set)");
    sweep_cmd->add_option("--seed", sweep_seed, "seed for class weights / default data");
    sweep_cmd->add_option("--out", sweep_out, "output directory")->required();
    sweep_cmd->callback(
        [&] { exit_code = run_sweep(sweep_config, sweep_data, sweep_seed, sweep_out); });

    // margin-report
    auto* report_cmd =
        app.add_subcommand("margin-report", "classify margin monotonicity for a loss");
    LossFlags report_loss;
    report_loss.attach(report_cmd);
    std::size_t report_samples = 512;
    std::string report_out;
    report_cmd->add_option("--samples", report_samples, "sample count over the theta range");
    report_cmd->add_option("--out", report_out, "optional JSON report path");
    report_cmd->callback([&] {
        exit_code = run_margin_report(report_loss.resolve(), report_samples, report_out);
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const TrainingError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return exit_code;
}
