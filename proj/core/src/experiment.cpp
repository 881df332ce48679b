#include "rtsad/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>
#include <tuple>

#include "rtsad/error.hpp"
#include "rtsad/eval.hpp"
#include "rtsad/random.hpp"

namespace rtsad::experiment {

using nlohmann::json;

const std::vector<double>& default_ratio_grid() {
    static const std::vector<double> grid = {0.0, 0.01, 0.02, 0.03, 0.04, 0.06, 0.08, 0.10, 0.13, 0.16, 0.20};
    return grid;
}

void SweepConfig::validate() const {
    if (dataset.synthetic) {
        dataset.synthetic->validate();
    } else if (dataset.train_csv.empty() || dataset.test_csv.empty()) {
        throw ConfigError("dataset: provide either a synthetic config or both train and test CSV paths");
    }
    if (models.empty()) throw ConfigError("at least one model kind is required");
    if (methods.empty()) throw ConfigError("at least one training method is required");
    if (ratios.empty()) throw ConfigError("at least one contamination ratio is required");
    for (const double r : ratios) {
        if (!(r >= 0.0 && r <= data::ContaminationSpec::kMaxRatio)) {
            throw ConfigError("contamination ratios must lie in [0, 0.2]");
        }
    }
    if (repetitions == 0) throw ConfigError("repetitions must be >= 1");
    if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("tau must lie strictly between 0 and 1");
    if (trial_epochs == 0) throw ConfigError("trial epochs must be >= 1");
    if (window == 0) throw ConfigError("window length must be >= 1");
    if (train_stride == 0) throw ConfigError("training stride must be >= 1");
    train.validate();
    if (dataset.synthetic) {
        for (const auto kind : models) (void)models::build_model(model_spec(kind, dataset.synthetic->channels), 0);
    }
}

models::ModelSpec SweepConfig::model_spec(models::ModelKind kind, std::size_t channels) const {
    models::ModelSpec spec;
    spec.kind = kind;
    spec.window = window;
    spec.channels = channels;
    spec.horizon = horizon;
    spec.hidden = hidden;
    return spec;
}

namespace {

const std::vector<std::string> kTopLevelKeys = {
    "dataset", "models",  "methods", "ratios",    "repetitions", "seed",  "tau",
    "trial_epochs", "window", "train_stride", "horizon", "hidden", "train", "jobs",
    "record_wall_time", "output_dir"};

void reject_unknown(const json& j, const std::vector<std::string>& allowed, std::string_view where) {
    for (const auto& [key, _] : j.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            throw ConfigError("unknown key '" + key + "' in " + std::string(where));
        }
    }
}

data::SyntheticConfig parse_synthetic(const json& j, std::uint64_t fallback_seed) {
    reject_unknown(j,
                   {"channels", "length", "test_length", "periods", "noise_sigma", "anomaly_types", "anomaly_rate",
                    "spike_min_sigma", "spike_max_sigma", "seed"},
                   "dataset.synthetic");
    data::SyntheticConfig c;
    c.seed = fallback_seed;
    if (j.contains("channels")) c.channels = j["channels"].get<std::size_t>();
    if (j.contains("length")) c.length = j["length"].get<std::size_t>();
    if (j.contains("test_length")) c.test_length = j["test_length"].get<std::size_t>();
    if (j.contains("periods")) c.periods = j["periods"].get<std::vector<double>>();
    if (j.contains("noise_sigma")) c.noise_sigma = j["noise_sigma"].get<double>();
    if (j.contains("anomaly_types")) {
        c.anomaly_types.clear();
        for (const auto& t : j["anomaly_types"]) c.anomaly_types.push_back(data::parse_anomaly_type(t.get<std::string>()));
    }
    if (j.contains("anomaly_rate")) c.anomaly_rate = j["anomaly_rate"].get<double>();
    if (j.contains("spike_min_sigma")) c.spike_min_sigma = j["spike_min_sigma"].get<double>();
    if (j.contains("spike_max_sigma")) c.spike_max_sigma = j["spike_max_sigma"].get<double>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    return c;
}

}  // namespace

SweepConfig parse_sweep_config(std::string_view json_text, const std::filesystem::path& base_dir) {
    SweepConfig c;
    try {
        const json j = json::parse(json_text);
        if (!j.is_object()) throw ConfigError("sweep config must be a JSON object");
        reject_unknown(j, kTopLevelKeys, "sweep config");
        if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
        if (j.contains("models")) {
            c.models.clear();
            for (const auto& m : j["models"]) c.models.push_back(models::parse_model_kind(m.get<std::string>()));
        }
        if (j.contains("methods")) {
            c.methods.clear();
            for (const auto& m : j["methods"]) c.methods.push_back(filter::parse_method(m.get<std::string>()));
        }
        if (j.contains("ratios")) c.ratios = j["ratios"].get<std::vector<double>>();
        if (j.contains("repetitions")) c.repetitions = j["repetitions"].get<std::size_t>();
        if (j.contains("tau")) c.tau = j["tau"].get<double>();
        if (j.contains("trial_epochs")) c.trial_epochs = j["trial_epochs"].get<std::size_t>();
        if (j.contains("window")) c.window = j["window"].get<std::size_t>();
        if (j.contains("train_stride")) c.train_stride = j["train_stride"].get<std::size_t>();
        if (j.contains("horizon")) c.horizon = j["horizon"].get<std::size_t>();
        if (j.contains("hidden")) c.hidden = j["hidden"].get<std::vector<std::size_t>>();
        if (j.contains("jobs")) c.jobs = j["jobs"].get<std::size_t>();
        if (j.contains("record_wall_time")) c.record_wall_time = j["record_wall_time"].get<bool>();
        if (j.contains("output_dir")) c.output_dir = j["output_dir"].get<std::string>();
        if (j.contains("train")) {
            const auto& t = j["train"];
            reject_unknown(t, {"epochs", "batch_size", "learning_rate", "patience"}, "train");
            if (t.contains("epochs")) c.train.epochs = t["epochs"].get<std::size_t>();
            if (t.contains("batch_size")) c.train.batch_size = t["batch_size"].get<std::size_t>();
            if (t.contains("learning_rate")) c.train.learning_rate = t["learning_rate"].get<double>();
            if (t.contains("patience")) c.train.patience = t["patience"].get<std::size_t>();
        }
        if (!j.contains("dataset")) throw ConfigError("sweep config needs a 'dataset' section");
        const auto& ds = j["dataset"];
        reject_unknown(ds, {"synthetic", "csv"}, "dataset");
        if (ds.contains("synthetic") == ds.contains("csv")) {
            throw ConfigError("dataset must contain exactly one of 'synthetic' or 'csv'");
        }
        if (ds.contains("synthetic")) {
            c.dataset.synthetic = parse_synthetic(ds["synthetic"], derive_seed(c.seed, {tag_hash("dataset")}));
        } else {
            const auto& csv = ds["csv"];
            reject_unknown(csv, {"train", "test"}, "dataset.csv");
            auto resolve = [&](const std::string& p) {
                const std::filesystem::path path(p);
                return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
            };
            c.dataset.train_csv = resolve(csv.at("train").get<std::string>());
            c.dataset.test_csv = resolve(csv.at("test").get<std::string>());
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("sweep config: ") + e.what());
    }
    c.validate();
    return c;
}

SweepConfig load_sweep_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_sweep_config(ss.str(), path.parent_path());
}

std::string to_json(const SweepConfig& c) {
    nlohmann::ordered_json j;
    if (c.dataset.synthetic) {
        const auto& s = *c.dataset.synthetic;
        nlohmann::ordered_json syn;
        syn["channels"] = s.channels;
        syn["length"] = s.length;
        syn["test_length"] = s.test_length;
        syn["periods"] = s.periods;
        syn["noise_sigma"] = s.noise_sigma;
        std::vector<std::string> types;
        for (const auto t : s.anomaly_types) types.emplace_back(data::to_string(t));
        syn["anomaly_types"] = types;
        syn["anomaly_rate"] = s.anomaly_rate;
        syn["spike_min_sigma"] = s.spike_min_sigma;
        syn["spike_max_sigma"] = s.spike_max_sigma;
        syn["seed"] = s.seed;
        j["dataset"]["synthetic"] = syn;
    } else {
        j["dataset"]["csv"] = {{"train", c.dataset.train_csv.string()}, {"test", c.dataset.test_csv.string()}};
    }
    std::vector<std::string> kinds, methods;
    for (const auto k : c.models) kinds.emplace_back(models::to_string(k));
    for (const auto m : c.methods) methods.emplace_back(filter::to_string(m));
    j["models"] = kinds;
    j["methods"] = methods;
    j["ratios"] = c.ratios;
    j["repetitions"] = c.repetitions;
    j["seed"] = c.seed;
    j["tau"] = c.tau;
    j["trial_epochs"] = c.trial_epochs;
    j["window"] = c.window;
    j["train_stride"] = c.train_stride;
    j["horizon"] = c.horizon;
    j["hidden"] = c.hidden;
    j["train"] = {{"epochs", c.train.epochs},
                  {"batch_size", c.train.batch_size},
                  {"learning_rate", c.train.learning_rate},
                  {"patience", c.train.patience}};
    j["jobs"] = c.jobs;
    j["record_wall_time"] = c.record_wall_time;
    j["output_dir"] = c.output_dir.string();
    return j.dump(2) + "\n";
}

PreparedData prepare_data(const SweepConfig& config) {
    config.validate();
    data::MultivariateSeries train;
    data::MultivariateSeries test;
    if (config.dataset.synthetic) {
        auto ds = data::generate_synthetic(*config.dataset.synthetic);
        train = std::move(ds.train);
        test = std::move(ds.test);
    } else {
        train = data::load_csv(config.dataset.train_csv);
        test = data::load_csv(config.dataset.test_csv);
    }
    if (train.channels() != test.channels()) {
        throw ShapeError("train and test series have different channel counts");
    }
    if (!test.has_labels()) throw ConfigError("the test series needs a label column");
    if (train.has_labels()) {
        const auto& l = *train.labels;
        if (std::any_of(l.begin(), l.end(), [](std::uint8_t x) { return x != 0; })) {
            throw ConfigError("the training series must be anomaly-free (all labels 0)");
        }
    }
    for (const auto kind : config.models) (void)models::build_model(config.model_spec(kind, train.channels()), 0);

    PreparedData out;
    out.normalizer = data::fit_normalizer(train);
    const auto norm_train = data::apply_normalizer(out.normalizer, train);
    out.test = data::apply_normalizer(out.normalizer, test);
    out.train_windows = data::make_windows(norm_train, config.window, config.train_stride);
    for (auto& w : out.train_windows.windows) w.anomalous = false;

    const auto test_windows = data::make_windows(out.test, config.window, 1);
    out.anomaly_pool = data::subset(test_windows, test_windows.anomalous_indices());
    return out;
}

namespace {

std::uint64_t ratio_key(double ratio) { return static_cast<std::uint64_t>(std::llround(ratio * 1e6)); }

}  // namespace

std::uint64_t cell_seed(std::uint64_t base, models::ModelKind model, filter::Method method, double ratio,
                        std::size_t repetition) {
    return derive_seed(base, {tag_hash("cell"), static_cast<std::uint64_t>(model), static_cast<std::uint64_t>(method),
                              ratio_key(ratio), repetition});
}

std::uint64_t contamination_seed(std::uint64_t base, double ratio, std::size_t repetition) {
    return derive_seed(base, {tag_hash("contaminate"), ratio_key(ratio), repetition});
}

ResultRow run_cell(const SweepConfig& config, const PreparedData& data, models::ModelKind model,
                   filter::Method method, double ratio, std::size_t repetition) {
    ResultRow row;
    row.model = model;
    row.method = method;
    row.ratio = ratio;
    row.repetition = repetition;
    row.seed = cell_seed(config.seed, model, method, ratio, repetition);

    const auto started = std::chrono::steady_clock::now();
    try {
        data::ContaminationSpec spec;
        spec.ratio = ratio;
        spec.seed = contamination_seed(config.seed, ratio, repetition);
        if (ratio > 0.0) spec.pool = data.anomaly_pool;
        const auto contaminated = data::inject_contamination(data.train_windows, spec);

        filter::RobustTrainConfig rc;
        rc.tau = config.tau;
        rc.trial_epochs = config.trial_epochs;
        rc.method = method;
        rc.train = config.train;
        rc.train.seed = row.seed;
        const auto factory = models::make_factory(config.model_spec(model, data.test.channels()));
        const auto trained = filter::robust_train(factory, contaminated.windows, rc);

        const auto scores = models::anomaly_scores(trained.model, data.test, 1);
        const auto& labels = *data.test.labels;
        row.auc = eval::auc_roc(scores, labels);
        row.best_f1 = eval::best_f1(scores, labels).f1;
        row.discard_size = trained.report.discard.size();
        if (ratio > 0.0 && method != filter::Method::vanilla) {
            if (const auto c = eval::coverage(contaminated.injected, trained.report.discard)) {
                row.coverage_pct = *c * 100.0;
            }
        }
    } catch (const std::exception& e) {
        row.error = std::string(models::to_string(model)) + "/" + std::string(filter::to_string(method)) +
                    "/ratio=" + std::to_string(ratio) + "/rep=" + std::to_string(repetition) + ": " + e.what();
    }
    if (config.record_wall_time) {
        row.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    }
    return row;
}

namespace {

auto row_key(const ResultRow& r) {
    return std::make_tuple(static_cast<int>(r.model), static_cast<int>(r.method), r.ratio, r.repetition);
}

}  // namespace

ExperimentResult run_sweep(const SweepConfig& config, const PreparedData& data,
                           const std::vector<ResultRow>& completed, const ProgressFn& progress) {
    config.validate();
    struct Cell {
        models::ModelKind model;
        filter::Method method;
        double ratio;
        std::size_t rep;
    };
    std::vector<Cell> cells;
    for (const auto m : config.models)
        for (const auto meth : config.methods)
            for (const double r : config.ratios)
                for (std::size_t rep = 0; rep < config.repetitions; ++rep) cells.push_back({m, meth, r, rep});

    std::map<std::tuple<int, int, double, std::size_t>, ResultRow> reused;
    for (const auto& row : completed) {
        if (row.ok() && row.seed == cell_seed(config.seed, row.model, row.method, row.ratio, row.repetition)) {
            reused.emplace(row_key(row), row);
        }
    }

    std::vector<ResultRow> rows(cells.size());
    std::vector<std::size_t> pending;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const auto& c = cells[i];
        ResultRow probe;
        probe.model = c.model;
        probe.method = c.method;
        probe.ratio = c.ratio;
        probe.repetition = c.rep;
        if (const auto it = reused.find(row_key(probe)); it != reused.end()) {
            rows[i] = it->second;
        } else {
            pending.push_back(i);
        }
    }

    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> done{cells.size() - pending.size()};
    std::mutex progress_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t k = next.fetch_add(1);
            if (k >= pending.size()) return;
            const auto& c = cells[pending[k]];
            rows[pending[k]] = run_cell(config, data, c.model, c.method, c.ratio, c.rep);
            const std::size_t finished = done.fetch_add(1) + 1;
            if (progress) {
                const std::lock_guard lock(progress_mutex);
                progress(rows[pending[k]], finished, cells.size());
            }
        }
    };
    std::size_t jobs = config.jobs ? config.jobs : std::max(1u, std::thread::hardware_concurrency());
    jobs = std::min(jobs, std::max<std::size_t>(pending.size(), 1));
    if (jobs <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(jobs);
        for (std::size_t t = 0; t < jobs; ++t) pool.emplace_back(worker);
    }

    std::sort(rows.begin(), rows.end(), [](const ResultRow& a, const ResultRow& b) { return row_key(a) < row_key(b); });
    return {std::move(rows)};
}

namespace {

struct Moments {
    std::optional<double> mean;
    std::optional<double> std;
};

Moments moments(const std::vector<double>& xs) {
    if (xs.empty()) return {};
    double sum = 0.0;
    for (const double x : xs) sum += x;
    const double mean = sum / static_cast<double>(xs.size());
    double ss = 0.0;
    for (const double x : xs) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / static_cast<double>(xs.size()))};
}

void put_number(std::string& out, const std::optional<double>& v) {
    if (!v) {
        out += "N/A";
        return;
    }
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), *v);
    out.append(buf, ptr);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    // Write to a sibling file first so an interrupted run never leaves a truncated CSV.
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw FormatError("cannot write '" + tmp.string() + "'");
        out << text;
        if (!out) throw FormatError("write to '" + tmp.string() + "' failed");
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace

std::vector<SummaryRow> summarize(const std::vector<ResultRow>& rows) {
    std::map<std::tuple<int, int, double>, std::vector<const ResultRow*>> groups;
    for (const auto& r : rows) groups[{static_cast<int>(r.model), static_cast<int>(r.method), r.ratio}].push_back(&r);

    std::vector<SummaryRow> out;
    for (const auto& [key, members] : groups) {
        std::vector<double> aucs, f1s, covs;
        for (const auto* r : members) {
            if (!r->ok()) continue;
            if (r->auc) aucs.push_back(*r->auc);
            if (r->best_f1) f1s.push_back(*r->best_f1);
            if (r->coverage_pct) covs.push_back(*r->coverage_pct);
        }
        SummaryRow s{members.front()->model, members.front()->method, members.front()->ratio, {}, {}, {}, {}, {}, {}};
        const auto a = moments(aucs);
        const auto f = moments(f1s);
        const auto c = moments(covs);
        s.auc_mean = a.mean;
        s.auc_std = a.std;
        s.f1_mean = f.mean;
        s.f1_std = f.std;
        s.coverage_mean = c.mean;
        s.coverage_std = c.std;
        out.push_back(s);
    }
    return out;
}

void write_results(const std::vector<ResultRow>& rows, std::ostream& out) {
    std::string text(kResultsHeader);
    text += '\n';
    for (const auto& r : rows) {
        text += models::to_string(r.model);
        text += ',';
        text += filter::to_string(r.method);
        text += ',';
        put_number(text, r.ratio);
        text += ',';
        text += std::to_string(r.seed);
        text += ',';
        if (r.ok()) {
            put_number(text, r.auc);
            text += ',';
            put_number(text, r.best_f1);
        } else {
            text += "error,error";
        }
        text += ',';
        put_number(text, r.coverage_pct);
        text += ',';
        text += std::to_string(r.discard_size);
        text += ',';
        put_number(text, r.wall_time_s);
        text += '\n';
    }
    out << text;
}

void write_results(const std::vector<ResultRow>& rows, const std::filesystem::path& path) {
    std::ostringstream ss;
    write_results(rows, ss);
    write_text(path, ss.str());
}

void write_summary(const std::vector<SummaryRow>& rows, std::ostream& out) {
    std::string text(kSummaryHeader);
    text += '\n';
    for (const auto& s : rows) {
        text += models::to_string(s.model);
        text += ',';
        text += filter::to_string(s.method);
        text += ',';
        put_number(text, s.ratio);
        for (const auto& v : {s.auc_mean, s.auc_std, s.f1_mean, s.f1_std, s.coverage_mean, s.coverage_std}) {
            text += ',';
            put_number(text, v);
        }
        text += '\n';
    }
    out << text;
}

void write_summary(const std::vector<SummaryRow>& rows, const std::filesystem::path& path) {
    std::ostringstream ss;
    write_summary(rows, ss);
    write_text(path, ss.str());
}

std::vector<ResultRow> read_results(const std::filesystem::path& path, const SweepConfig& config) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open results '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line) || line != kResultsHeader) {
        throw FormatError("'" + path.string() + "' does not start with the results header");
    }

    auto number = [&](std::string_view cell) -> std::optional<double> {
        if (cell == "N/A") return std::nullopt;
        double v = 0.0;
        const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
        if (ec != std::errc() || ptr != cell.data() + cell.size()) {
            throw ParseError("results: cannot parse '" + std::string(cell) + "'");
        }
        return v;
    };

    std::vector<ResultRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 9) throw FormatError("results: malformed row '" + line + "'");

        ResultRow r;
        r.model = models::parse_model_kind(cells[0]);
        r.method = filter::parse_method(cells[1]);
        r.ratio = number(cells[2]).value_or(0.0);
        std::uint64_t seed = 0;
        {
            const auto [ptr, ec] = std::from_chars(cells[3].data(), cells[3].data() + cells[3].size(), seed);
            if (ec != std::errc() || ptr != cells[3].data() + cells[3].size()) {
                throw ParseError("results: bad seed '" + cells[3] + "'");
            }
        }
        r.seed = seed;
        if (cells[4] == "error") {
            r.error = "error recorded in previous run";
        } else {
            r.auc = number(cells[4]);
            r.best_f1 = number(cells[5]);
        }
        r.coverage_pct = number(cells[6]);
        r.discard_size = static_cast<std::size_t>(std::stoull(cells[7]));
        r.wall_time_s = number(cells[8]);

        bool matched = false;
        for (std::size_t rep = 0; rep < config.repetitions && !matched; ++rep) {
            if (cell_seed(config.seed, r.model, r.method, r.ratio, rep) == r.seed) {
                r.repetition = rep;
                matched = true;
            }
        }
        if (matched) rows.push_back(std::move(r));
    }
    return rows;
}

}  // namespace rtsad::experiment
