#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rtsad/nn.hpp"

namespace rtsad::data {

// T x d real-valued series with optional per-timestep 0/1 anomaly labels.
struct MultivariateSeries {
    std::vector<std::string> channel_names;
    nn::Matrix values;  // rows = timesteps, cols = channels
    std::optional<std::vector<std::uint8_t>> labels;

    std::size_t length() const { return values.rows; }
    std::size_t channels() const { return values.cols; }
    bool has_labels() const { return labels.has_value(); }

    // Throws FormatError/NumericError when the invariants do not hold.
    void validate() const;

    friend bool operator==(const MultivariateSeries&, const MultivariateSeries&) = default;
};

// CSV: header of channel names, optional trailing "label" column of 0/1,
// one row per timestep, '.' as decimal separator.
MultivariateSeries load_csv(const std::filesystem::path& path);
MultivariateSeries parse_csv(std::istream& in, std::string_view source = "<stream>");
void write_csv(const MultivariateSeries& series, const std::filesystem::path& path);
void write_csv(const MultivariateSeries& series, std::ostream& out);

struct Normalizer {
    static constexpr double kStdFloor = 1e-8;

    std::vector<double> mean;
    std::vector<double> stddev;  // population std, floored at kStdFloor

    friend bool operator==(const Normalizer&, const Normalizer&) = default;
};

Normalizer fit_normalizer(const MultivariateSeries& train);
MultivariateSeries apply_normalizer(const Normalizer& normalizer, const MultivariateSeries& series);

struct Window {
    nn::Matrix values;  // w x d, time-major
    bool anomalous = false;
    std::size_t origin = 0;

    friend bool operator==(const Window&, const Window&) = default;
};

struct WindowSet {
    std::size_t length = 0;    // w
    std::size_t channels = 0;  // d
    std::vector<Window> windows;

    std::size_t size() const { return windows.size(); }
    bool empty() const { return windows.empty(); }
    const Window& operator[](std::size_t i) const { return windows[i]; }

    std::vector<std::size_t> anomalous_indices() const;

    friend bool operator==(const WindowSet&, const WindowSet&) = default;
};

/// Cuts windows at origins 0, stride, 2*stride, ... while origin + w <= T.
/// A window is anomalous iff any timestep it covers is labeled anomalous.
WindowSet make_windows(const MultivariateSeries& series, std::size_t w, std::size_t stride);

/// Windows at the given indices, in the given order.
WindowSet subset(const WindowSet& set, std::span<const std::size_t> indices);

enum class AnomalyType { spike, level_shift, frequency_change };

std::string_view to_string(AnomalyType type);
AnomalyType parse_anomaly_type(std::string_view name);

struct SyntheticConfig {
    std::size_t channels = 4;
    std::size_t length = 20000;       // train length
    std::size_t test_length = 0;      // 0 means "same as length"
    std::vector<double> periods = {50.0, 120.0, 300.0};
    double noise_sigma = 0.1;
    std::vector<AnomalyType> anomaly_types = {AnomalyType::spike, AnomalyType::level_shift,
                                              AnomalyType::frequency_change};
    double anomaly_rate = 0.05;       // fraction of labeled test timesteps
    double spike_min_sigma = 5.0;     // spike magnitude range in units of noise_sigma
                                      // (channel std when noise_sigma is 0)
    double spike_max_sigma = 8.0;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SyntheticDataset {
    MultivariateSeries train;  // anomaly-free, labels all 0
    MultivariateSeries test;   // labeled anomaly segments
};

/// Seasonal mixture plus Gaussian noise per channel; test anomalies are
/// spikes (additive, >= spike_min_sigma noise sigmas), level shifts or
/// frequency changes. Deterministic per seed.
SyntheticDataset generate_synthetic(const SyntheticConfig& config);

struct ContaminationSpec {
    double ratio = 0.0;  // in [0, 0.2]
    std::uint64_t seed = 0;
    WindowSet pool;      // labeled-anomalous windows

    static constexpr double kMaxRatio = 0.2;
};

struct ContaminatedSet {
    WindowSet windows;
    std::vector<std::size_t> injected;  // sorted positions that were replaced
};

/// Replaces exactly round(ratio * n) windows, at positions chosen uniformly
/// without repetition, by windows drawn from the pool (without replacement
/// when the pool is large enough, otherwise with replacement). The replaced
/// positions keep their origin; values and flag come from the pool.
ContaminatedSet inject_contamination(const WindowSet& train, const ContaminationSpec& spec);

/// Half-away-from-zero rounding of a non-negative count.
std::size_t round_count(double x);

struct IndexSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
};

/// Uniform random 4:1 partition of `items` with |val| = round(n / 5).
/// Both halves keep the input's relative order.
IndexSplit split_indices(std::span<const std::size_t> items, std::uint64_t seed);

struct TrainValSplit {
    WindowSet train;
    WindowSet val;
};

TrainValSplit split_train_val(const WindowSet& windows, std::uint64_t seed);

}  // namespace rtsad::data
