#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rtsad/data.hpp"
#include "rtsad/filter.hpp"
#include "rtsad/models.hpp"

namespace rtsad::experiment {

/// 0, 1, 2, 3, 4, 6, 8, 10, 13, 16 and 20 percent.
const std::vector<double>& default_ratio_grid();

struct DatasetSource {
    // Exactly one of the two is used: a synthetic benchmark, or train/test CSVs.
    std::optional<data::SyntheticConfig> synthetic;
    std::filesystem::path train_csv;
    std::filesystem::path test_csv;
};

struct SweepConfig {
    DatasetSource dataset;
    std::vector<models::ModelKind> models = {models::ModelKind::reconstruction, models::ModelKind::prediction};
    std::vector<filter::Method> methods = {filter::Method::vanilla, filter::Method::m_only, filter::Method::v_only,
                                           filter::Method::combined};
    std::vector<double> ratios = default_ratio_grid();
    std::size_t repetitions = 5;
    std::uint64_t seed = 0;
    double tau = 0.2;
    std::size_t trial_epochs = 10;
    std::size_t window = 12;
    std::size_t train_stride = 1;
    std::size_t horizon = 1;
    std::vector<std::size_t> hidden = {16};
    models::TrainConfig train;
    std::size_t jobs = 1;  // worker threads; 0 = hardware concurrency
    bool record_wall_time = false;
    std::filesystem::path output_dir = "results";

    void validate() const;
    models::ModelSpec model_spec(models::ModelKind kind, std::size_t channels) const;
};

/// Parses the JSON config document. Relative CSV paths are resolved against
/// `base_dir`. Unknown keys are rejected.
SweepConfig parse_sweep_config(std::string_view json_text, const std::filesystem::path& base_dir = {});
SweepConfig load_sweep_config(const std::filesystem::path& path);
std::string to_json(const SweepConfig& config);

// Normalized data shared read-only by every cell of a sweep.
struct PreparedData {
    data::Normalizer normalizer;
    data::MultivariateSeries test;   // normalized, labeled
    data::WindowSet train_windows;   // clean training windows at the training stride
    data::WindowSet anomaly_pool;    // anomalous test windows at stride 1
};

PreparedData prepare_data(const SweepConfig& config);

struct ResultRow {
    models::ModelKind model = models::ModelKind::reconstruction;
    filter::Method method = filter::Method::vanilla;
    double ratio = 0.0;
    std::size_t repetition = 0;
    std::uint64_t seed = 0;
    std::optional<double> auc;
    std::optional<double> best_f1;
    std::optional<double> coverage_pct;  // injected windows caught by the discard set, in percent
    std::size_t discard_size = 0;
    std::optional<double> wall_time_s;
    std::optional<std::string> error;

    bool ok() const { return !error.has_value(); }
};

std::uint64_t cell_seed(std::uint64_t base, models::ModelKind model, filter::Method method, double ratio,
                        std::size_t repetition);

/// Seed of the contaminated training set; shared by every model and method
/// at the same (ratio, repetition) so arms are compared on identical data.
std::uint64_t contamination_seed(std::uint64_t base, double ratio, std::size_t repetition);

/// Contaminate -> train (robust or vanilla) -> score the test series -> metrics.
/// Failures are reported in the row's error field, never thrown.
ResultRow run_cell(const SweepConfig& config, const PreparedData& data, models::ModelKind model,
                   filter::Method method, double ratio, std::size_t repetition);

struct ExperimentResult {
    std::vector<ResultRow> rows;  // sorted by (model, method, ratio, repetition)
};

using ProgressFn = std::function<void(const ResultRow&, std::size_t done, std::size_t total)>;

/// Runs every (model, method, ratio, repetition) cell on a bounded worker pool.
/// Rows in `completed` that match a cell and have no error are reused as-is.
ExperimentResult run_sweep(const SweepConfig& config, const PreparedData& data,
                           const std::vector<ResultRow>& completed = {}, const ProgressFn& progress = {});

struct SummaryRow {
    models::ModelKind model;
    filter::Method method;
    double ratio;
    std::optional<double> auc_mean, auc_std;
    std::optional<double> f1_mean, f1_std;
    std::optional<double> coverage_mean, coverage_std;  // percent
};

/// Mean and population standard deviation per (model, method, ratio) over
/// the successful rows.
std::vector<SummaryRow> summarize(const std::vector<ResultRow>& rows);

inline constexpr std::string_view kResultsHeader =
    "model,method,ratio,seed,auc,best_f1,coverage,discard_size,wall_time_s";
inline constexpr std::string_view kSummaryHeader =
    "model,method,ratio,auc_mean,auc_std,f1_mean,f1_std,coverage_mean,coverage_std";

void write_results(const std::vector<ResultRow>& rows, std::ostream& out);
void write_results(const std::vector<ResultRow>& rows, const std::filesystem::path& path);
void write_summary(const std::vector<SummaryRow>& rows, std::ostream& out);
void write_summary(const std::vector<SummaryRow>& rows, const std::filesystem::path& path);

/// Reads a results CSV written by write_results. Repetition indices are
/// recovered by matching seeds against `config`'s cells; unmatched rows are dropped.
std::vector<ResultRow> read_results(const std::filesystem::path& path, const SweepConfig& config);

}  // namespace rtsad::experiment
