#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rtsad/data.hpp"
#include "rtsad/models.hpp"
#include "rtsad/nn.hpp"

namespace rtsad::filter {

// Per-sample loss history over the trial epochs. Column 0 is the loss at
// initialization (L^0); column i is the loss after the i-th trial epoch.
struct LossTrace {
    nn::Matrix losses;  // n x (N + 1)

    std::size_t samples() const { return losses.rows; }
    std::size_t trial_epochs() const { return losses.cols == 0 ? 0 : losses.cols - 1; }
    std::span<const double> row(std::size_t i) const { return losses.row(i); }

    // Throws NumericError/ShapeError unless N >= 1 and every entry is finite and >= 0.
    void validate() const;
};

enum class Method { vanilla, m_only, v_only, combined };

std::string_view to_string(Method method);
// Accepts "vanilla", "m", "m_only", "v", "v_only", "combined".
Method parse_method(std::string_view name);

struct RobustTrainConfig {
    double tau = 0.2;                  // upper bound on the anomaly ratio
    std::size_t trial_epochs = 10;     // N
    models::TrainConfig train;         // shared by the trial and the final training
    Method method = Method::combined;

    void validate() const;
};

/// Trains a fresh model from `factory` on all windows for N epochs and
/// records a full evaluation pass of per-window losses before training and
/// after each epoch.
LossTrace record_trial_traces(const models::ModelFactory& factory, const data::WindowSet& windows,
                              std::size_t trial_epochs, const models::TrainConfig& config);

/// Mean of L^1..L^N per sample (column 0 excluded).
std::vector<double> metric_m(const LossTrace& trace);

/// Population standard deviation of the N loss updates L^i - L^(i-1), i = 1..N.
std::vector<double> metric_v(const LossTrace& trace);

/// 1-based rank ceil(q * n), clamped to [1, n]. Products within 1e-9 of an
/// integer are treated as that integer so that e.g. (1 - 0.2) * 10 gives 8.
std::size_t quantile_rank(std::size_t n, double q);

/// Order statistic at rank quantile_rank(n, q) of the ascending values.
double quantile_threshold(std::span<const double> values, double q);

struct FilterReport {
    Method method = Method::combined;
    double tau = 0.2;
    std::size_t samples = 0;
    std::vector<double> m;
    std::vector<double> v;
    std::optional<double> threshold_m;  // Q_m(1 - tau); absent for the vanilla pipeline
    std::optional<double> threshold_v;  // Q_v(1 - tau)
    std::vector<std::size_t> s_m;
    std::vector<std::size_t> s_v;
    std::vector<std::size_t> discard;

    std::string to_json() const;
    static FilterReport from_json(std::string_view text);
};

/// S_m / S_v are the strict exceeders of the (1 - tau) quantiles; the discard
/// set is S_m, S_v, their union, or empty depending on `method`.
/// Throws FilterError when the discard set would contain every sample.
FilterReport select_discard(std::span<const double> m, std::span<const double> v, double tau, Method method);

struct RobustTrainResult {
    models::TsadModel model;
    FilterReport report;
    std::vector<std::size_t> retained;  // window indices the final model saw (train + validation)
    models::FitResult fit;
};

/// Full pipeline: trial traces, metrics, discard selection, then a freshly
/// initialized model trained on the retained windows with a 4:1
/// train/validation split and early stopping. The vanilla method skips the
/// trial phase and keeps every window.
RobustTrainResult robust_train(const models::ModelFactory& factory, const data::WindowSet& windows,
                               const RobustTrainConfig& config);

}  // namespace rtsad::filter
