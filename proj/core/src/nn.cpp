#include "rtsad/nn.hpp"

#include <cmath>
#include <string>

#include "rtsad/error.hpp"
#include "rtsad/random.hpp"

namespace rtsad::nn {

namespace {

double activate(Activation a, double z) {
    switch (a) {
        case Activation::identity: return z;
        case Activation::tanh: return std::tanh(z);
        case Activation::relu: return z > 0.0 ? z : 0.0;
    }
    return z;
}

// Derivative expressed through the activation output y = act(z).
double activation_slope(Activation a, double y) {
    switch (a) {
        case Activation::identity: return 1.0;
        case Activation::tanh: return 1.0 - y * y;
        case Activation::relu: return y > 0.0 ? 1.0 : 0.0;
    }
    return 1.0;
}

void layer_forward(const DenseLayer& layer, std::span<const double> in, std::span<double> out) {
    const std::size_t n_out = layer.outputs();
    const std::size_t n_in = layer.inputs();
    for (std::size_t r = 0; r < n_out; ++r) {
        const double* w = layer.weight.data.data() + r * n_in;
        double z = layer.bias[r];
        for (std::size_t c = 0; c < n_in; ++c) z += w[c] * in[c];
        out[r] = activate(layer.activation, z);
    }
}

void check_input(const DenseNet& net, std::span<const double> input) {
    if (net.layers.empty()) throw ArchitectureError("network has no layers");
    if (input.size() != net.input_size()) {
        throw ShapeError("input length " + std::to_string(input.size()) + " does not match network input size " +
                         std::to_string(net.input_size()));
    }
}

void check_target(const DenseNet& net, std::span<const double> target) {
    if (target.size() != net.output_size()) {
        throw ShapeError("target length " + std::to_string(target.size()) + " does not match network output size " +
                         std::to_string(net.output_size()));
    }
}

// Runs the forward pass into ws-owned buffers; returns the output buffer.
const std::vector<double>& run_forward(const DenseNet& net, std::span<const double> input,
                                       std::vector<std::vector<double>>& acts) {
    if (acts.size() != net.layers.size() + 1) throw ShapeError("workspace was built for a different network");
    for (std::size_t k = 0; k < net.layers.size(); ++k) {
        if (acts[k + 1].size() != net.layers[k].outputs()) {
            throw ShapeError("workspace was built for a different network");
        }
    }
    acts[0].assign(input.begin(), input.end());
    for (std::size_t k = 0; k < net.layers.size(); ++k) layer_forward(net.layers[k], acts[k], acts[k + 1]);
    return acts.back();
}

}  // namespace

std::string_view to_string(Activation a) {
    switch (a) {
        case Activation::identity: return "identity";
        case Activation::tanh: return "tanh";
        case Activation::relu: return "relu";
    }
    return "identity";
}

Activation parse_activation(std::string_view name) {
    if (name == "identity") return Activation::identity;
    if (name == "tanh") return Activation::tanh;
    if (name == "relu") return Activation::relu;
    throw ParseError("unknown activation '" + std::string(name) + "'");
}

std::size_t DenseNet::parameter_count() const {
    std::size_t count = 0;
    for (const auto& layer : layers) count += layer.weight.data.size() + layer.bias.size();
    return count;
}

std::vector<std::size_t> DenseNet::sizes() const {
    std::vector<std::size_t> out;
    if (layers.empty()) return out;
    out.push_back(layers.front().inputs());
    for (const auto& layer : layers) out.push_back(layer.outputs());
    return out;
}

DenseNet init_network(std::span<const std::size_t> sizes, std::span<const Activation> activations,
                      std::uint64_t seed) {
    if (sizes.size() < 2) throw ArchitectureError("a network needs at least two layer sizes");
    for (const std::size_t s : sizes) {
        if (s == 0) throw ArchitectureError("layer sizes must be positive");
    }
    if (activations.size() != sizes.size() - 1) {
        throw ArchitectureError("expected " + std::to_string(sizes.size() - 1) + " activations, got " +
                                std::to_string(activations.size()));
    }

    Rng rng(seed);
    DenseNet net;
    net.seed = seed;
    net.layers.reserve(sizes.size() - 1);
    for (std::size_t k = 0; k + 1 < sizes.size(); ++k) {
        const std::size_t fan_in = sizes[k];
        const std::size_t fan_out = sizes[k + 1];
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        DenseLayer layer;
        layer.weight = Matrix(fan_out, fan_in);
        for (double& w : layer.weight.data) w = rng.uniform(-bound, bound);
        layer.bias.assign(fan_out, 0.0);
        layer.activation = activations[k];
        net.layers.push_back(std::move(layer));
    }
    return net;
}

DenseNet init_network(std::span<const std::size_t> sizes, Activation hidden, Activation output,
                      std::uint64_t seed) {
    std::vector<Activation> acts(sizes.size() > 1 ? sizes.size() - 1 : 0, hidden);
    if (!acts.empty()) acts.back() = output;
    return init_network(sizes, acts, seed);
}

std::vector<double> forward(const DenseNet& net, std::span<const double> input) {
    check_input(net, input);
    std::vector<double> current(input.begin(), input.end());
    std::vector<double> next;
    for (const auto& layer : net.layers) {
        next.assign(layer.outputs(), 0.0);
        layer_forward(layer, current, next);
        current.swap(next);
    }
    return current;
}

double mse_per_sample(std::span<const double> prediction, std::span<const double> target) {
    if (prediction.size() != target.size()) {
        throw ShapeError("prediction length " + std::to_string(prediction.size()) + " differs from target length " +
                         std::to_string(target.size()));
    }
    if (prediction.empty()) throw ShapeError("mse of empty vectors is undefined");
    double sum = 0.0;
    for (std::size_t i = 0; i < prediction.size(); ++i) {
        const double d = prediction[i] - target[i];
        sum += d * d;
    }
    return sum / static_cast<double>(prediction.size());
}

Gradients Gradients::zeros_like(const DenseNet& net) {
    Gradients g;
    g.weight.reserve(net.layers.size());
    g.bias.reserve(net.layers.size());
    for (const auto& layer : net.layers) {
        g.weight.emplace_back(layer.weight.rows, layer.weight.cols);
        g.bias.emplace_back(layer.bias.size(), 0.0);
    }
    return g;
}

void Gradients::set_zero() {
    for (auto& w : weight) std::fill(w.data.begin(), w.data.end(), 0.0);
    for (auto& b : bias) std::fill(b.begin(), b.end(), 0.0);
}

void Gradients::scale(double factor) {
    for (auto& w : weight)
        for (double& x : w.data) x *= factor;
    for (auto& b : bias)
        for (double& x : b) x *= factor;
}

bool Gradients::all_finite() const {
    for (const auto& w : weight)
        for (const double x : w.data)
            if (!std::isfinite(x)) return false;
    for (const auto& b : bias)
        for (const double x : b)
            if (!std::isfinite(x)) return false;
    return true;
}

bool Gradients::same_shape(const DenseNet& net) const {
    if (weight.size() != net.layers.size() || bias.size() != net.layers.size()) return false;
    for (std::size_t k = 0; k < net.layers.size(); ++k) {
        const auto& layer = net.layers[k];
        if (weight[k].rows != layer.weight.rows || weight[k].cols != layer.weight.cols) return false;
        if (weight[k].data.size() != layer.weight.data.size()) return false;
        if (bias[k].size() != layer.bias.size()) return false;
    }
    return true;
}

Workspace::Workspace(const DenseNet& net) {
    const auto widths = net.sizes();
    activations_.reserve(widths.size());
    for (const std::size_t w : widths) activations_.emplace_back(w, 0.0);
    deltas_ = activations_;
}

double sample_mse(const DenseNet& net, std::span<const double> input, std::span<const double> target,
                  Workspace& ws) {
    check_input(net, input);
    check_target(net, target);
    return mse_per_sample(run_forward(net, input, ws.activations_), target);
}

double accumulate_gradients(const DenseNet& net, std::span<const double> input, std::span<const double> target,
                            Gradients& into, double weight, Workspace& ws) {
    check_input(net, input);
    check_target(net, target);
    auto& acts = ws.activations_;
    auto& deltas = ws.deltas_;
    const auto& output = run_forward(net, input, acts);
    const double loss = mse_per_sample(output, target);

    // dL/dy for the output layer.
    const double k = static_cast<double>(output.size());
    auto& top = deltas.back();
    for (std::size_t i = 0; i < output.size(); ++i) top[i] = 2.0 * (output[i] - target[i]) / k;

    for (std::size_t l = net.layers.size(); l-- > 0;) {
        const auto& layer = net.layers[l];
        const auto& y = acts[l + 1];
        const auto& x = acts[l];
        auto& dy = deltas[l + 1];
        const std::size_t n_out = layer.outputs();
        const std::size_t n_in = layer.inputs();
        for (std::size_t r = 0; r < n_out; ++r) dy[r] *= activation_slope(layer.activation, y[r]);

        auto& gw = into.weight[l].data;
        auto& gb = into.bias[l];
        for (std::size_t r = 0; r < n_out; ++r) {
            const double d = weight * dy[r];
            gb[r] += d;
            double* row = gw.data() + r * n_in;
            for (std::size_t c = 0; c < n_in; ++c) row[c] += d * x[c];
        }
        if (l == 0) break;
        auto& dx = deltas[l];
        std::fill(dx.begin(), dx.end(), 0.0);
        for (std::size_t r = 0; r < n_out; ++r) {
            const double* row = layer.weight.data.data() + r * n_in;
            const double d = dy[r];
            for (std::size_t c = 0; c < n_in; ++c) dx[c] += row[c] * d;
        }
    }
    return loss;
}

Gradients backward(const DenseNet& net, std::span<const double> input, std::span<const double> target) {
    check_input(net, input);
    Gradients g = Gradients::zeros_like(net);
    Workspace ws(net);
    accumulate_gradients(net, input, target, g, 1.0, ws);
    return g;
}

AdamState make_adam(const DenseNet& net, double learning_rate) {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw ConfigError("learning rate must be positive and finite");
    }
    AdamState state;
    state.learning_rate = learning_rate;
    state.first_moment = Gradients::zeros_like(net);
    state.second_moment = Gradients::zeros_like(net);
    return state;
}

void optimizer_step(DenseNet& net, const Gradients& gradients, AdamState& state) {
    if (!gradients.same_shape(net)) throw ShapeError("gradient shapes do not mirror network parameters");
    if (!state.first_moment.same_shape(net) || !state.second_moment.same_shape(net)) {
        throw ShapeError("optimizer state shapes do not mirror network parameters");
    }
    if (!gradients.all_finite()) throw NumericError("non-finite gradient passed to optimizer");

    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(state.beta1, t);
    const double correction2 = 1.0 - std::pow(state.beta2, t);
    const double b1 = state.beta1;
    const double b2 = state.beta2;

    auto update = [&](std::vector<double>& param, const std::vector<double>& grad, std::vector<double>& m,
                      std::vector<double>& v) {
        for (std::size_t i = 0; i < param.size(); ++i) {
            const double g = grad[i];
            m[i] = b1 * m[i] + (1.0 - b1) * g;
            v[i] = b2 * v[i] + (1.0 - b2) * g * g;
            const double m_hat = m[i] / correction1;
            const double v_hat = v[i] / correction2;
            param[i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
        }
    };
    for (std::size_t k = 0; k < net.layers.size(); ++k) {
        update(net.layers[k].weight.data, gradients.weight[k].data, state.first_moment.weight[k].data,
               state.second_moment.weight[k].data);
        update(net.layers[k].bias, gradients.bias[k], state.first_moment.bias[k], state.second_moment.bias[k]);
    }
}

}  // namespace rtsad::nn
