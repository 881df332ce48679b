#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "rtsad/data.hpp"
#include "rtsad/error.hpp"
#include "rtsad/eval.hpp"
#include "rtsad/experiment.hpp"
#include "rtsad/filter.hpp"
#include "rtsad/models.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace rtsad;

namespace {

// Options shared by train and sweep; each one, when given, overrides the
// matching key of the config document.
struct CommonOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<double> tau;
    std::optional<std::size_t> trial_epochs;
    std::optional<std::size_t> window;
    std::optional<std::size_t> train_stride;
    std::optional<std::size_t> horizon;
    std::vector<std::size_t> hidden;
    std::optional<std::size_t> epochs;
    std::optional<std::size_t> batch_size;
    std::optional<double> learning_rate;
    std::optional<std::size_t> patience;
    std::string train_csv;
    std::string test_csv;
    bool synthetic = false;
    std::string output_dir;
};

void add_common(CLI::App* app, CommonOptions& o) {
    app->add_option("--config", o.config_path, "JSON config file")->check(CLI::ExistingFile);
    app->add_option("--seed", o.seed, "base seed");
    app->add_option("--tau", o.tau, "discard quantile in (0, 1)");
    app->add_option("--trial-epochs", o.trial_epochs, "trial epochs N");
    app->add_option("--window", o.window, "window length");
    app->add_option("--train-stride", o.train_stride, "stride of training windows");
    app->add_option("--horizon", o.horizon, "prediction horizon");
    app->add_option("--hidden", o.hidden, "hidden layer sizes")->delimiter(',');
    app->add_option("--epochs", o.epochs, "max training epochs");
    app->add_option("--batch-size", o.batch_size, "minibatch size");
    app->add_option("--learning-rate", o.learning_rate, "Adam learning rate");
    app->add_option("--patience", o.patience, "early-stopping patience");
    app->add_option("--train-csv", o.train_csv, "training series CSV");
    app->add_option("--test-csv", o.test_csv, "labeled test series CSV");
    app->add_flag("--synthetic", o.synthetic, "use the default synthetic benchmark");
    app->add_option("--output-dir", o.output_dir, "output directory (overrides RTSAD_OUTPUT_DIR)");
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json load_document(const std::string& path) {
    if (path.empty()) return json::object();
    try {
        auto j = json::parse(read_file(path));
        if (!j.is_object()) throw ConfigError("config must be a JSON object");
        return j;
    } catch (const json::exception& e) {
        throw ConfigError("config '" + path + "': " + e.what());
    }
}

void apply_common(json& j, const CommonOptions& o) {
    if (o.seed) j["seed"] = *o.seed;
    if (o.tau) j["tau"] = *o.tau;
    if (o.trial_epochs) j["trial_epochs"] = *o.trial_epochs;
    if (o.window) j["window"] = *o.window;
    if (o.train_stride) j["train_stride"] = *o.train_stride;
    if (o.horizon) j["horizon"] = *o.horizon;
    if (!o.hidden.empty()) j["hidden"] = o.hidden;
    if (o.epochs) j["train"]["epochs"] = *o.epochs;
    if (o.batch_size) j["train"]["batch_size"] = *o.batch_size;
    if (o.learning_rate) j["train"]["learning_rate"] = *o.learning_rate;
    if (o.patience) j["train"]["patience"] = *o.patience;
    if (o.synthetic && (!o.train_csv.empty() || !o.test_csv.empty())) {
        throw ConfigError("--synthetic cannot be combined with --train-csv/--test-csv");
    }
    if (o.synthetic) {
        j["dataset"] = {{"synthetic", json::object()}};
    } else if (!o.train_csv.empty() || !o.test_csv.empty()) {
        if (o.train_csv.empty() || o.test_csv.empty()) throw ConfigError("--train-csv and --test-csv go together");
        j["dataset"] = {{"csv", {{"train", fs::absolute(o.train_csv).string()}, {"test", fs::absolute(o.test_csv).string()}}}};
    }
}

// Flag, then environment, then config file.
fs::path resolve_output_dir(const std::string& flag, const fs::path& from_config) {
    if (!flag.empty()) return flag;
    if (const char* env = std::getenv("RTSAD_OUTPUT_DIR"); env && *env) return env;
    return from_config;
}

experiment::SweepConfig finish_config(json& j, const std::string& config_path) {
    const fs::path base = config_path.empty() ? fs::path{} : fs::path(config_path).parent_path();
    return experiment::parse_sweep_config(j.dump(), base);
}

void write_text_file(const fs::path& path, const std::string& text) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write '" + tmp.string() + "'");
        out << text;
        if (!out) throw Error("write failed for '" + tmp.string() + "'");
    }
    fs::rename(tmp, path);
}

// ---- generate ----

struct GenerateOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> channels, length, test_length;
    std::optional<double> noise_sigma, anomaly_rate, spike_min, spike_max;
    std::vector<std::string> anomaly_types;
    std::string output_dir;
};

int run_generate(const GenerateOptions& o) {
    json syn = json::object();
    json output_dir = "data";
    std::uint64_t base_seed = 0;
    if (!o.config_path.empty()) {
        const auto doc = load_document(o.config_path);
        if (doc.contains("seed")) base_seed = doc["seed"].get<std::uint64_t>();
        if (doc.contains("dataset") && doc["dataset"].contains("synthetic")) syn = doc["dataset"]["synthetic"];
        if (doc.contains("output_dir")) output_dir = doc["output_dir"];
    }
    if (o.seed) syn["seed"] = *o.seed;
    if (o.channels) syn["channels"] = *o.channels;
    if (o.length) syn["length"] = *o.length;
    if (o.test_length) syn["test_length"] = *o.test_length;
    if (o.noise_sigma) syn["noise_sigma"] = *o.noise_sigma;
    if (o.anomaly_rate) syn["anomaly_rate"] = *o.anomaly_rate;
    if (o.spike_min) syn["spike_min_sigma"] = *o.spike_min;
    if (o.spike_max) syn["spike_max_sigma"] = *o.spike_max;
    if (!o.anomaly_types.empty()) syn["anomaly_types"] = o.anomaly_types;
    json doc = {{"seed", base_seed}, {"dataset", {{"synthetic", syn}}}, {"output_dir", output_dir}};
    const auto config = experiment::parse_sweep_config(doc.dump());

    const fs::path out_dir = resolve_output_dir(o.output_dir, config.output_dir);
    const auto ds = data::generate_synthetic(*config.dataset.synthetic);
    fs::create_directories(out_dir);
    std::ostringstream train, test;
    data::write_csv(ds.train, train);
    data::write_csv(ds.test, test);
    write_text_file(out_dir / "train.csv", train.str());
    write_text_file(out_dir / "test.csv", test.str());
    std::cout << "wrote " << (out_dir / "train.csv").string() << " and " << (out_dir / "test.csv").string() << "\n";
    return 0;
}

// ---- train ----

struct TrainOptions {
    CommonOptions common;
    std::string model = "reconstruction";
    std::string method = "combined";
    double ratio = 0.0;
};

int run_train(TrainOptions& o) {
    json j = load_document(o.common.config_path);
    apply_common(j, o.common);
    // A single run: the grid keys are irrelevant, pin them to what this run uses.
    j["models"] = {o.model};
    j["methods"] = {o.method};
    j["ratios"] = {o.ratio};
    j["repetitions"] = 1;
    const auto config = finish_config(j, o.common.config_path);
    const auto kind = config.models.front();
    const auto method = config.methods.front();
    const fs::path out_dir = resolve_output_dir(o.common.output_dir, config.output_dir);

    const auto prepared = experiment::prepare_data(config);
    data::ContaminationSpec spec;
    spec.ratio = o.ratio;
    spec.seed = experiment::contamination_seed(config.seed, o.ratio, 0);
    if (o.ratio > 0.0) spec.pool = prepared.anomaly_pool;
    const auto contaminated = data::inject_contamination(prepared.train_windows, spec);

    filter::RobustTrainConfig rc;
    rc.tau = config.tau;
    rc.trial_epochs = config.trial_epochs;
    rc.method = method;
    rc.train = config.train;
    rc.train.seed = config.seed;
    const auto factory = models::make_factory(config.model_spec(kind, prepared.test.channels()));
    const auto result = filter::robust_train(factory, contaminated.windows, rc);

    fs::create_directories(out_dir);
    write_text_file(out_dir / "filter_report.json", result.report.to_json());
    std::ostringstream ckpt;
    models::save_checkpoint({result.model, prepared.normalizer}, ckpt);
    write_text_file(out_dir / "model.ckpt", ckpt.str());

    const auto scores = models::anomaly_scores(result.model, prepared.test, 1);
    const auto& labels = *prepared.test.labels;
    std::cout << "method " << filter::to_string(method) << ", discarded " << result.report.discard.size() << " of "
              << result.report.samples << " windows\n";
    if (const auto cov = eval::coverage(contaminated.injected, result.report.discard); cov && method != filter::Method::vanilla) {
        std::cout << "coverage " << *cov * 100.0 << "%\n";
    }
    std::cout << "test auc " << eval::auc_roc(scores, labels) << ", best f1 " << eval::best_f1(scores, labels).f1
              << "\n";
    std::cout << "wrote " << (out_dir / "filter_report.json").string() << " and " << (out_dir / "model.ckpt").string()
              << "\n";
    return 0;
}

// ---- evaluate ----

struct EvaluateOptions {
    std::string checkpoint;
    std::string test_csv;
    std::string scores_out;
};

int run_evaluate(const EvaluateOptions& o) {
    const auto ckpt = models::load_checkpoint(fs::path(o.checkpoint));
    auto test = data::load_csv(o.test_csv);
    if (test.channels() != ckpt.model.channels) {
        throw ShapeError("test series has " + std::to_string(test.channels()) + " channels, checkpoint expects " +
                         std::to_string(ckpt.model.channels));
    }
    if (ckpt.normalizer) test = data::apply_normalizer(*ckpt.normalizer, test);
    const auto scores = models::anomaly_scores(ckpt.model, test, 1);
    if (!o.scores_out.empty()) {
        std::ostringstream out;
        out << "t,score\n";
        char buf[64];
        for (std::size_t t = 0; t < scores.size(); ++t) {
            const auto r = std::to_chars(buf, buf + sizeof buf, scores[t]);
            out << t << ',' << std::string_view(buf, static_cast<std::size_t>(r.ptr - buf)) << '\n';
        }
        write_text_file(o.scores_out, out.str());
    }
    if (test.has_labels()) {
        std::cout << "auc " << eval::auc_roc(scores, *test.labels) << "\n";
        const auto f1 = eval::best_f1(scores, *test.labels);
        std::cout << "best f1 " << f1.f1 << " at threshold " << f1.threshold << "\n";
    } else {
        std::cout << "scored " << scores.size() << " timesteps (no labels)\n";
    }
    return 0;
}

// ---- sweep ----

struct SweepOptions {
    CommonOptions common;
    std::vector<std::string> models;
    std::vector<std::string> methods;
    std::vector<double> ratios;
    std::optional<std::size_t> repetitions;
    std::optional<std::size_t> jobs;
    bool resume = false;
    bool timing = false;
    bool quiet = false;
};

int run_sweep(SweepOptions& o) {
    if (!o.common.seed) throw ConfigError("sweep needs --seed");
    json j = load_document(o.common.config_path);
    apply_common(j, o.common);
    if (!o.models.empty()) j["models"] = o.models;
    if (!o.methods.empty()) j["methods"] = o.methods;
    if (!o.ratios.empty()) j["ratios"] = o.ratios;
    if (o.repetitions) j["repetitions"] = *o.repetitions;
    if (o.jobs) j["jobs"] = *o.jobs;
    if (o.timing) j["record_wall_time"] = true;
    auto config = finish_config(j, o.common.config_path);
    config.output_dir = resolve_output_dir(o.common.output_dir, config.output_dir);

    const auto prepared = experiment::prepare_data(config);

    const fs::path results_path = config.output_dir / "results.csv";
    std::vector<experiment::ResultRow> completed;
    if (o.resume && fs::exists(results_path)) {
        completed = experiment::read_results(results_path, config);
        std::cerr << "resuming: " << completed.size() << " rows on disk\n";
    }

    fs::create_directories(config.output_dir);
    write_text_file(config.output_dir / "config.json", experiment::to_json(config) + "\n");

    // Finished rows are flushed as they arrive so an interrupted sweep can resume.
    std::vector<experiment::ResultRow> finished = completed;
    std::size_t since_flush = 0;
    const auto progress = [&](const experiment::ResultRow& row, std::size_t done, std::size_t total) {
        finished.push_back(row);
        if (!o.quiet) {
            std::cerr << "[" << done << "/" << total << "] " << models::to_string(row.model) << " "
                      << filter::to_string(row.method) << " ratio=" << row.ratio << " rep=" << row.repetition;
            if (row.ok()) {
                std::cerr << " auc=" << *row.auc << "\n";
            } else {
                std::cerr << " error: " << *row.error << "\n";
            }
        }
        if (++since_flush >= 8) {
            since_flush = 0;
            auto snapshot = finished;
            std::sort(snapshot.begin(), snapshot.end(), [](const auto& a, const auto& b) {
                return std::tie(a.model, a.method, a.ratio, a.repetition) <
                       std::tie(b.model, b.method, b.ratio, b.repetition);
            });
            experiment::write_results(snapshot, results_path);
        }
    };
    const auto result = experiment::run_sweep(config, prepared, completed, progress);
    experiment::write_results(result.rows, results_path);
    experiment::write_summary(experiment::summarize(result.rows), config.output_dir / "summary.csv");

    std::size_t failed = 0;
    for (const auto& row : result.rows) failed += row.ok() ? 0 : 1;
    std::cout << "wrote " << result.rows.size() << " rows to " << results_path.string();
    if (failed) std::cout << " (" << failed << " failed cells)";
    std::cout << "\n";
    return failed ? 2 : 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Robust training of time-series anomaly detectors on contaminated data"};
    app.require_subcommand(1);

    GenerateOptions gen;
    auto* generate = app.add_subcommand("generate", "write a synthetic train/test pair as CSV");
    generate->add_option("--config", gen.config_path, "JSON config; its dataset.synthetic section is used")
        ->check(CLI::ExistingFile);
    generate->add_option("--seed", gen.seed, "generator seed");
    generate->add_option("--channels", gen.channels);
    generate->add_option("--length", gen.length, "training length");
    generate->add_option("--test-length", gen.test_length);
    generate->add_option("--noise-sigma", gen.noise_sigma);
    generate->add_option("--anomaly-rate", gen.anomaly_rate, "fraction of anomalous test timesteps");
    generate->add_option("--spike-min-sigma", gen.spike_min);
    generate->add_option("--spike-max-sigma", gen.spike_max);
    generate->add_option("--anomaly-types", gen.anomaly_types, "spike,level_shift,frequency_change")->delimiter(',');
    generate->add_option("--output-dir", gen.output_dir);

    TrainOptions tr;
    auto* train = app.add_subcommand("train", "one robust training run; writes a filter report and a checkpoint");
    add_common(train, tr.common);
    train->add_option("--model", tr.model, "reconstruction | prediction");
    train->add_option("--method", tr.method, "vanilla | m | v | combined");
    train->add_option("--ratio", tr.ratio, "contamination ratio of the training windows");

    EvaluateOptions ev;
    auto* evaluate = app.add_subcommand("evaluate", "score a test CSV with a checkpoint");
    evaluate->add_option("--checkpoint", ev.checkpoint)->required()->check(CLI::ExistingFile);
    evaluate->add_option("--test-csv", ev.test_csv)->required()->check(CLI::ExistingFile);
    evaluate->add_option("--scores-out", ev.scores_out, "write per-timestep scores to this CSV");

    SweepOptions sw;
    auto* sweep = app.add_subcommand("sweep", "full models x methods x ratios x repetitions grid");
    add_common(sweep, sw.common);
    sweep->add_option("--models", sw.models)->delimiter(',');
    sweep->add_option("--methods", sw.methods)->delimiter(',');
    sweep->add_option("--ratios", sw.ratios)->delimiter(',');
    sweep->add_option("--repetitions", sw.repetitions);
    sweep->add_option("--jobs", sw.jobs, "worker threads, 0 = all cores");
    sweep->add_flag("--resume", sw.resume, "reuse finished rows of an existing results.csv");
    sweep->add_flag("--timing", sw.timing, "record wall time per cell (output no longer byte-reproducible)");
    sweep->add_flag("--quiet", sw.quiet);

    CLI11_PARSE(app, argc, argv);

    try {
        if (generate->parsed()) return run_generate(gen);
        if (train->parsed()) return run_train(tr);
        if (evaluate->parsed()) return run_evaluate(ev);
        if (sweep->parsed()) return run_sweep(sw);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
