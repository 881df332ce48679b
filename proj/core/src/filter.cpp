#include "rtsad/filter.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>

#include "rtsad/error.hpp"
#include "rtsad/random.hpp"

namespace rtsad::filter {

void LossTrace::validate() const {
    if (losses.cols < 2) throw ShapeError("loss trace needs at least one trial epoch");
    if (losses.data.size() != losses.rows * losses.cols) throw ShapeError("loss trace buffer has wrong size");
    for (const double x : losses.data) {
        if (!std::isfinite(x) || x < 0.0) throw NumericError("loss trace entries must be finite and non-negative");
    }
}

std::string_view to_string(Method method) {
    switch (method) {
        case Method::vanilla: return "vanilla";
        case Method::m_only: return "m_only";
        case Method::v_only: return "v_only";
        case Method::combined: return "combined";
    }
    return "combined";
}

Method parse_method(std::string_view name) {
    if (name == "vanilla") return Method::vanilla;
    if (name == "m" || name == "m_only") return Method::m_only;
    if (name == "v" || name == "v_only") return Method::v_only;
    if (name == "combined") return Method::combined;
    throw ConfigError("unknown training method '" + std::string(name) + "' (expected vanilla, m, v or combined)");
}

void RobustTrainConfig::validate() const {
    if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("tau must lie strictly between 0 and 1");
    if (trial_epochs == 0) throw ConfigError("the number of trial epochs must be >= 1");
    train.validate();
}

LossTrace record_trial_traces(const models::ModelFactory& factory, const data::WindowSet& windows,
                              std::size_t trial_epochs, const models::TrainConfig& config) {
    if (trial_epochs == 0) throw ConfigError("the number of trial epochs must be >= 1");
    if (windows.empty()) throw TrainingError("cannot record loss traces over an empty window set");
    config.validate();

    const std::size_t n = windows.size();
    LossTrace trace;
    trace.losses = nn::Matrix(n, trial_epochs + 1);

    models::TrainingState state(factory(derive_seed(config.seed, {tag_hash("trial-init")})), config.learning_rate);
    auto record = [&](std::size_t column) {
        const auto losses = models::sample_losses(state.model, windows);
        for (std::size_t i = 0; i < n; ++i) trace.losses(i, column) = losses[i];
    };

    std::vector<std::size_t> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = i;

    record(0);
    for (std::size_t epoch = 1; epoch <= trial_epochs; ++epoch) {
        models::train_epoch(state, windows, all, config, epoch);
        record(epoch);
    }
    trace.validate();
    return trace;
}

std::vector<double> metric_m(const LossTrace& trace) {
    trace.validate();
    const std::size_t N = trace.trial_epochs();
    std::vector<double> m(trace.samples());
    for (std::size_t i = 0; i < trace.samples(); ++i) {
        const auto row = trace.row(i);
        double sum = 0.0;
        for (std::size_t e = 1; e <= N; ++e) sum += row[e];
        m[i] = sum / static_cast<double>(N);
    }
    return m;
}

std::vector<double> metric_v(const LossTrace& trace) {
    trace.validate();
    const std::size_t N = trace.trial_epochs();
    std::vector<double> v(trace.samples());
    std::vector<double> deltas(N);
    for (std::size_t i = 0; i < trace.samples(); ++i) {
        const auto row = trace.row(i);
        double mean = 0.0;
        for (std::size_t e = 1; e <= N; ++e) {
            deltas[e - 1] = row[e] - row[e - 1];
            mean += deltas[e - 1];
        }
        mean /= static_cast<double>(N);
        double ss = 0.0;
        for (const double d : deltas) ss += (d - mean) * (d - mean);
        v[i] = std::sqrt(ss / static_cast<double>(N));
    }
    return v;
}

std::size_t quantile_rank(std::size_t n, double q) {
    if (n == 0) throw ConfigError("quantile of an empty set");
    if (!(q > 0.0 && q < 1.0)) throw ConfigError("quantile level must lie strictly between 0 and 1");
    const double x = q * static_cast<double>(n);
    const double nearest = std::round(x);
    const double rank = std::abs(x - nearest) <= 1e-9 * std::max(1.0, x) ? nearest : std::ceil(x);
    return std::clamp<std::size_t>(static_cast<std::size_t>(rank), 1, n);
}

double quantile_threshold(std::span<const double> values, double q) {
    if (values.empty()) throw ConfigError("quantile of an empty set");
    const std::size_t rank = quantile_rank(values.size(), q);
    std::vector<double> sorted(values.begin(), values.end());
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(rank - 1), sorted.end());
    return sorted[rank - 1];
}

FilterReport select_discard(std::span<const double> m, std::span<const double> v, double tau, Method method) {
    if (m.size() != v.size()) throw ShapeError("m and v must have the same length");
    if (m.size() < 2) throw ShapeError("discard selection needs at least two samples");
    if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("tau must lie strictly between 0 and 1");

    FilterReport report;
    report.method = method;
    report.tau = tau;
    report.samples = m.size();
    report.m.assign(m.begin(), m.end());
    report.v.assign(v.begin(), v.end());
    const double q = 1.0 - tau;
    report.threshold_m = quantile_threshold(m, q);
    report.threshold_v = quantile_threshold(v, q);
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (m[i] > *report.threshold_m) report.s_m.push_back(i);
        if (v[i] > *report.threshold_v) report.s_v.push_back(i);
    }
    switch (method) {
        case Method::vanilla: break;
        case Method::m_only: report.discard = report.s_m; break;
        case Method::v_only: report.discard = report.s_v; break;
        case Method::combined:
            std::set_union(report.s_m.begin(), report.s_m.end(), report.s_v.begin(), report.s_v.end(),
                           std::back_inserter(report.discard));
            break;
    }
    if (report.discard.size() == report.samples) {
        throw FilterError("the discard set contains every sample; nothing is left to train on");
    }
    return report;
}

std::string FilterReport::to_json() const {
    nlohmann::ordered_json j;
    j["method"] = std::string(to_string(method));
    j["tau"] = tau;
    j["samples"] = samples;
    j["threshold_m"] = threshold_m ? nlohmann::ordered_json(*threshold_m) : nlohmann::ordered_json(nullptr);
    j["threshold_v"] = threshold_v ? nlohmann::ordered_json(*threshold_v) : nlohmann::ordered_json(nullptr);
    j["s_m"] = s_m;
    j["s_v"] = s_v;
    j["discard"] = discard;
    j["m"] = m;
    j["v"] = v;
    return j.dump(2) + "\n";
}

FilterReport FilterReport::from_json(std::string_view text) {
    try {
        const auto j = nlohmann::json::parse(text);
        FilterReport r;
        r.method = parse_method(j.at("method").get<std::string>());
        r.tau = j.at("tau").get<double>();
        r.samples = j.at("samples").get<std::size_t>();
        if (!j.at("threshold_m").is_null()) r.threshold_m = j.at("threshold_m").get<double>();
        if (!j.at("threshold_v").is_null()) r.threshold_v = j.at("threshold_v").get<double>();
        r.s_m = j.at("s_m").get<std::vector<std::size_t>>();
        r.s_v = j.at("s_v").get<std::vector<std::size_t>>();
        r.discard = j.at("discard").get<std::vector<std::size_t>>();
        r.m = j.at("m").get<std::vector<double>>();
        r.v = j.at("v").get<std::vector<double>>();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("filter report: ") + e.what());
    }
}

RobustTrainResult robust_train(const models::ModelFactory& factory, const data::WindowSet& windows,
                               const RobustTrainConfig& config) {
    config.validate();
    if (windows.empty()) throw TrainingError("cannot train on an empty window set");
    const std::uint64_t seed = config.train.seed;

    RobustTrainResult result;
    if (config.method == Method::vanilla) {
        result.report.method = Method::vanilla;
        result.report.tau = config.tau;
        result.report.samples = windows.size();
    } else {
        models::TrainConfig trial = config.train;
        trial.seed = derive_seed(seed, {tag_hash("trial")});
        const LossTrace trace = record_trial_traces(factory, windows, config.trial_epochs, trial);
        result.report = select_discard(metric_m(trace), metric_v(trace), config.tau, config.method);
    }

    std::vector<std::uint8_t> dropped(windows.size(), 0);
    for (const std::size_t i : result.report.discard) dropped[i] = 1;
    for (std::size_t i = 0; i < windows.size(); ++i)
        if (!dropped[i]) result.retained.push_back(i);
    if (result.retained.empty()) throw FilterError("no windows retained for training");

    const auto split = data::split_indices(result.retained, derive_seed(seed, {tag_hash("split")}));
    models::TrainConfig final_cfg = config.train;
    final_cfg.seed = derive_seed(seed, {tag_hash("final")});
    result.fit = models::fit(factory(derive_seed(seed, {tag_hash("final-init")})), windows, split.train, split.val,
                             final_cfg);
    result.model = result.fit.model;
    return result;
}

}  // namespace rtsad::filter
