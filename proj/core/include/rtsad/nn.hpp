#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace rtsad::nn {

enum class Activation { identity, tanh, relu };

std::string_view to_string(Activation a);
Activation parse_activation(std::string_view name);

// Dense row-major matrix of doubles.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
    std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

    friend bool operator==(const Matrix&, const Matrix&) = default;
};

// y = act(W x + b), with W stored as (outputs x inputs).
struct DenseLayer {
    Matrix weight;
    std::vector<double> bias;
    Activation activation = Activation::identity;

    std::size_t inputs() const { return weight.cols; }
    std::size_t outputs() const { return weight.rows; }

    friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

struct DenseNet {
    std::vector<DenseLayer> layers;
    std::uint64_t seed = 0;

    std::size_t input_size() const { return layers.front().inputs(); }
    std::size_t output_size() const { return layers.back().outputs(); }
    std::size_t parameter_count() const;
    // Layer widths, input first: [in, h1, ..., out].
    std::vector<std::size_t> sizes() const;

    friend bool operator==(const DenseNet&, const DenseNet&) = default;
};

/// Builds a network with Xavier-uniform weights, |w| <= sqrt(6 / (fan_in + fan_out)),
/// and zero biases. `activations` holds one entry per layer (sizes.size() - 1).
/// Throws ArchitectureError on fewer than two sizes, zero sizes or an
/// activation count that does not match.
DenseNet init_network(std::span<const std::size_t> sizes, std::span<const Activation> activations,
                      std::uint64_t seed);

/// Convenience overload: `hidden` on every layer but the last, `output` on the last.
DenseNet init_network(std::span<const std::size_t> sizes, Activation hidden, Activation output,
                      std::uint64_t seed);

std::vector<double> forward(const DenseNet& net, std::span<const double> input);

/// Mean of squared componentwise differences.
double mse_per_sample(std::span<const double> prediction, std::span<const double> target);

// Parameter-shaped container: one weight matrix and one bias vector per layer.
struct Gradients {
    std::vector<Matrix> weight;
    std::vector<std::vector<double>> bias;

    static Gradients zeros_like(const DenseNet& net);

    void set_zero();
    void scale(double factor);
    bool all_finite() const;
    bool same_shape(const DenseNet& net) const;
};

// Scratch buffers reused across forward/backward calls on one network shape.
class Workspace {
public:
    explicit Workspace(const DenseNet& net);

private:
    friend double accumulate_gradients(const DenseNet&, std::span<const double>, std::span<const double>,
                                       Gradients&, double, Workspace&);
    friend double sample_mse(const DenseNet&, std::span<const double>, std::span<const double>, Workspace&);

    std::vector<std::vector<double>> activations_;  // activations_[k] = input of layer k
    std::vector<std::vector<double>> deltas_;
};

/// Exact reverse-mode gradient of mse_per_sample(forward(net, input), target).
Gradients backward(const DenseNet& net, std::span<const double> input, std::span<const double> target);

/// Adds `weight` times the gradient for one sample into `into` and returns the
/// sample's loss. This is the allocation-free path used by training loops.
double accumulate_gradients(const DenseNet& net, std::span<const double> input, std::span<const double> target,
                            Gradients& into, double weight, Workspace& ws);

/// mse_per_sample(forward(net, input), target) without allocating.
double sample_mse(const DenseNet& net, std::span<const double> input, std::span<const double> target,
                  Workspace& ws);

// Adam optimizer state.
struct AdamState {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    Gradients first_moment;
    Gradients second_moment;
    std::uint64_t step = 0;
};

AdamState make_adam(const DenseNet& net, double learning_rate = 1e-3);

/// Applies one Adam update in place and increments the step counter.
/// Throws NumericError (leaving net and state untouched) on a non-finite gradient,
/// ShapeError if the gradient does not mirror the network.
void optimizer_step(DenseNet& net, const Gradients& gradients, AdamState& state);

}  // namespace rtsad::nn
