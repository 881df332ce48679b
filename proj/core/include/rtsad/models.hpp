#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "rtsad/data.hpp"
#include "rtsad/nn.hpp"

namespace rtsad::models {

enum class ModelKind { reconstruction, prediction };

std::string_view to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view name);

// A window model. Reconstruction maps the flattened w x d window onto itself;
// prediction maps the first w - h steps onto the last h steps.
struct TsadModel {
    ModelKind kind = ModelKind::reconstruction;
    nn::DenseNet net;
    std::size_t window = 0;
    std::size_t channels = 0;
    std::size_t horizon = 0;  // 0 for reconstruction

    std::size_t input_size() const;
    std::size_t output_size() const;

    // Input and target views into a flattened time-major w x d window.
    std::span<const double> input_of(std::span<const double> window_values) const;
    std::span<const double> target_of(std::span<const double> window_values) const;

    friend bool operator==(const TsadModel&, const TsadModel&) = default;
};

struct ModelSpec {
    ModelKind kind = ModelKind::reconstruction;
    std::size_t window = 12;
    std::size_t channels = 1;
    std::size_t horizon = 1;  // prediction only
    std::vector<std::size_t> hidden = {8};
    nn::Activation hidden_activation = nn::Activation::tanh;
};

/// Throws ConfigError when the reconstruction bottleneck is not strictly
/// smaller than w*d, when h is outside [1, w) for prediction, or when a
/// dimension is zero.
TsadModel build_model(const ModelSpec& spec, std::uint64_t seed);
TsadModel build_model(ModelKind kind, std::size_t w, std::size_t d, std::size_t h,
                      const std::vector<std::size_t>& hidden, std::uint64_t seed);

// Produces a freshly initialized model for a given seed.
using ModelFactory = std::function<TsadModel(std::uint64_t seed)>;

ModelFactory make_factory(ModelSpec spec);

double sample_loss(const TsadModel& model, const nn::Matrix& window);
double sample_loss(const TsadModel& model, const data::Window& window);

/// Per-window losses over the whole set, in set order.
std::vector<double> sample_losses(const TsadModel& model, const data::WindowSet& windows);

/// Mean loss over the windows at `indices`.
double mean_loss(const TsadModel& model, const data::WindowSet& windows, std::span<const std::size_t> indices);

struct TrainConfig {
    std::size_t epochs = 30;
    std::size_t batch_size = 32;
    double learning_rate = 1e-3;
    std::size_t patience = 5;
    std::uint64_t seed = 0;

    void validate() const;
};

// Model plus optimizer state; owned by one training loop.
struct TrainingState {
    TsadModel model;
    nn::AdamState optimizer;

    explicit TrainingState(TsadModel m, double learning_rate);
};

/// One shuffled pass of minibatch Adam steps over `mask`. The shuffle is a
/// permutation of mask positions drawn from (config.seed, epoch), so training
/// with mask M equals training on subset(windows, M) with the full mask.
/// Throws TrainingError on an empty mask.
void train_epoch(TrainingState& state, const data::WindowSet& windows, std::span<const std::size_t> mask,
                 const TrainConfig& config, std::size_t epoch);

struct FitResult {
    TsadModel model;  // parameters at the best validation epoch
    std::size_t epochs_run = 0;
    std::size_t best_epoch = 0;  // 0 = the initialization was never beaten
    double best_val_loss = 0.0;
    std::vector<double> val_history;
};

/// Trains on `train_idx` with early stopping on the mean loss over `val_idx`.
FitResult fit(TsadModel initial, const data::WindowSet& windows, std::span<const std::size_t> train_idx,
              std::span<const std::size_t> val_idx, const TrainConfig& config);

/// Per-timestep anomaly scores: every window loss at stride `stride`, and
/// each timestep takes the maximum loss over the windows covering it.
/// Uncovered timesteps take the minimum score of the series.
std::vector<double> anomaly_scores(const TsadModel& model, const data::MultivariateSeries& test,
                                   std::size_t stride = 1);

// Architecture, parameters and (optionally) the input normalizer.
struct Checkpoint {
    TsadModel model;
    std::optional<data::Normalizer> normalizer;

    friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

void save_checkpoint(const Checkpoint& checkpoint, std::ostream& out);
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(std::istream& in);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace rtsad::models
