#include "rtsad/models.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <type_traits>
#include <string>

#include "rtsad/error.hpp"
#include "rtsad/random.hpp"

namespace rtsad::models {

std::string_view to_string(ModelKind kind) {
    return kind == ModelKind::reconstruction ? "reconstruction" : "prediction";
}

ModelKind parse_model_kind(std::string_view name) {
    if (name == "reconstruction") return ModelKind::reconstruction;
    if (name == "prediction") return ModelKind::prediction;
    throw ConfigError("unknown model kind '" + std::string(name) + "' (expected reconstruction or prediction)");
}

std::size_t TsadModel::input_size() const {
    return kind == ModelKind::reconstruction ? window * channels : (window - horizon) * channels;
}

std::size_t TsadModel::output_size() const {
    return kind == ModelKind::reconstruction ? window * channels : horizon * channels;
}

std::span<const double> TsadModel::input_of(std::span<const double> window_values) const {
    return window_values.first(input_size());
}

std::span<const double> TsadModel::target_of(std::span<const double> window_values) const {
    return window_values.last(output_size());
}

TsadModel build_model(const ModelSpec& spec, std::uint64_t seed) {
    if (spec.window == 0 || spec.channels == 0) throw ConfigError("window length and channel count must be >= 1");
    for (const std::size_t h : spec.hidden) {
        if (h == 0) throw ConfigError("hidden layer sizes must be positive");
    }

    TsadModel model;
    model.kind = spec.kind;
    model.window = spec.window;
    model.channels = spec.channels;
    if (spec.kind == ModelKind::reconstruction) {
        const std::size_t in = spec.window * spec.channels;
        if (spec.hidden.empty()) throw ConfigError("a reconstruction model needs a bottleneck hidden layer");
        const std::size_t bottleneck = *std::min_element(spec.hidden.begin(), spec.hidden.end());
        if (bottleneck >= in) {
            throw ConfigError("reconstruction bottleneck " + std::to_string(bottleneck) +
                              " must be strictly smaller than the window size " + std::to_string(in));
        }
        model.horizon = 0;
    } else {
        if (spec.horizon == 0 || spec.horizon >= spec.window) {
            throw ConfigError("prediction horizon must satisfy 1 <= h < w (h=" + std::to_string(spec.horizon) +
                              ", w=" + std::to_string(spec.window) + ")");
        }
        model.horizon = spec.horizon;
    }

    std::vector<std::size_t> sizes;
    sizes.push_back(model.input_size());
    sizes.insert(sizes.end(), spec.hidden.begin(), spec.hidden.end());
    sizes.push_back(model.output_size());
    model.net = nn::init_network(sizes, spec.hidden_activation, nn::Activation::identity, seed);
    return model;
}

TsadModel build_model(ModelKind kind, std::size_t w, std::size_t d, std::size_t h,
                      const std::vector<std::size_t>& hidden, std::uint64_t seed) {
    ModelSpec spec;
    spec.kind = kind;
    spec.window = w;
    spec.channels = d;
    spec.horizon = h;
    spec.hidden.assign(hidden.begin(), hidden.end());
    return build_model(spec, seed);
}

ModelFactory make_factory(ModelSpec spec) {
    // Validate eagerly so a bad spec fails before any training starts.
    (void)build_model(spec, 0);
    return [spec = std::move(spec)](std::uint64_t seed) { return build_model(spec, seed); };
}

namespace {

void check_window(const TsadModel& model, const nn::Matrix& window) {
    if (window.rows != model.window || window.cols != model.channels) {
        throw ShapeError("window is " + std::to_string(window.rows) + "x" + std::to_string(window.cols) +
                         ", model expects " + std::to_string(model.window) + "x" + std::to_string(model.channels));
    }
}

double loss_with(const TsadModel& model, std::span<const double> values, nn::Workspace& ws) {
    return nn::sample_mse(model.net, model.input_of(values), model.target_of(values), ws);
}

}  // namespace

double sample_loss(const TsadModel& model, const nn::Matrix& window) {
    check_window(model, window);
    const auto out = nn::forward(model.net, model.input_of(window.data));
    return nn::mse_per_sample(out, model.target_of(window.data));
}

double sample_loss(const TsadModel& model, const data::Window& window) { return sample_loss(model, window.values); }

std::vector<double> sample_losses(const TsadModel& model, const data::WindowSet& windows) {
    std::vector<double> out;
    out.reserve(windows.size());
    nn::Workspace ws(model.net);
    for (const auto& w : windows.windows) {
        check_window(model, w.values);
        out.push_back(loss_with(model, w.values.data, ws));
    }
    return out;
}

double mean_loss(const TsadModel& model, const data::WindowSet& windows, std::span<const std::size_t> indices) {
    if (indices.empty()) throw TrainingError("mean loss over an empty index set");
    nn::Workspace ws(model.net);
    double sum = 0.0;
    for (const std::size_t i : indices) {
        const auto& w = windows.windows.at(i).values;
        check_window(model, w);
        sum += loss_with(model, w.data, ws);
    }
    return sum / static_cast<double>(indices.size());
}

void TrainConfig::validate() const {
    if (epochs == 0) throw ConfigError("train config: epochs must be >= 1");
    if (batch_size == 0) throw ConfigError("train config: batch size must be >= 1");
    if (patience == 0) throw ConfigError("train config: patience must be >= 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw ConfigError("train config: learning rate must be positive and finite");
    }
}

TrainingState::TrainingState(TsadModel m, double learning_rate)
    : model(std::move(m)), optimizer(nn::make_adam(model.net, learning_rate)) {}

void train_epoch(TrainingState& state, const data::WindowSet& windows, std::span<const std::size_t> mask,
                 const TrainConfig& config, std::size_t epoch) {
    if (mask.empty()) throw TrainingError("training mask is empty");
    config.validate();
    auto& model = state.model;
    for (const std::size_t i : mask) {
        if (i >= windows.size()) throw TrainingError("mask index " + std::to_string(i) + " out of range");
    }

    std::vector<std::size_t> order(mask.begin(), mask.end());
    Rng rng(derive_seed(config.seed, {tag_hash("epoch"), epoch}));
    rng.shuffle(order);

    nn::Workspace ws(model.net);
    nn::Gradients grads = nn::Gradients::zeros_like(model.net);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
        const std::size_t stop = std::min(order.size(), start + config.batch_size);
        const double weight = 1.0 / static_cast<double>(stop - start);
        grads.set_zero();
        for (std::size_t b = start; b < stop; ++b) {
            const auto& w = windows.windows[order[b]].values;
            check_window(model, w);
            nn::accumulate_gradients(model.net, model.input_of(w.data), model.target_of(w.data), grads, weight, ws);
        }
        nn::optimizer_step(model.net, grads, state.optimizer);
    }
}

FitResult fit(TsadModel initial, const data::WindowSet& windows, std::span<const std::size_t> train_idx,
              std::span<const std::size_t> val_idx, const TrainConfig& config) {
    config.validate();
    if (train_idx.empty()) throw TrainingError("no training windows");
    if (val_idx.empty()) throw TrainingError("no validation windows");

    FitResult result;
    TrainingState state(std::move(initial), config.learning_rate);
    result.model = state.model;
    result.best_val_loss = mean_loss(state.model, windows, val_idx);
    std::size_t since_best = 0;
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        train_epoch(state, windows, train_idx, config, epoch);
        const double val = mean_loss(state.model, windows, val_idx);
        if (!std::isfinite(val)) throw NumericError("validation loss became non-finite");
        result.val_history.push_back(val);
        result.epochs_run = epoch;
        if (val < result.best_val_loss) {
            result.best_val_loss = val;
            result.best_epoch = epoch;
            result.model = state.model;
            since_best = 0;
        } else if (++since_best >= config.patience) {
            break;
        }
    }
    return result;
}

std::vector<double> anomaly_scores(const TsadModel& model, const data::MultivariateSeries& test, std::size_t stride) {
    if (test.channels() != model.channels) {
        throw ShapeError("series has " + std::to_string(test.channels()) + " channels, model expects " +
                         std::to_string(model.channels));
    }
    if (stride == 0) throw ShapeError("scoring stride must be >= 1");
    const std::size_t T = test.length();
    const std::size_t w = model.window;
    const std::size_t d = model.channels;
    if (T < w) {
        throw ShapeError("series length " + std::to_string(T) + " is shorter than the window length " +
                         std::to_string(w));
    }

    constexpr double kUnset = -std::numeric_limits<double>::infinity();
    std::vector<double> scores(T, kUnset);
    nn::Workspace ws(model.net);
    double covered_min = std::numeric_limits<double>::infinity();
    for (std::size_t origin = 0; origin + w <= T; origin += stride) {
        const std::span<const double> values(test.values.data.data() + origin * d, w * d);
        const double loss = loss_with(model, values, ws);
        for (std::size_t t = origin; t < origin + w; ++t) scores[t] = std::max(scores[t], loss);
    }
    for (const double s : scores)
        if (s != kUnset) covered_min = std::min(covered_min, s);
    for (double& s : scores)
        if (s == kUnset) s = covered_min;
    return scores;
}

// Checkpoint text format, one token group per line:
//
//   rtsad-checkpoint 1
//   kind <reconstruction|prediction>
//   window <w>
//   channels <d>
//   horizon <h>
//   seed <u64>
//   layers <L>
//   layer <inputs> <outputs> <activation>     (L times, each followed by)
//   weights <outputs*inputs values, row-major>
//   bias <outputs values>
//   normalizer <d>|none
//   mean <d values>                            (only when a normalizer is present)
//   std <d values>
//   end
//
// Numbers use the shortest round-trip representation, so a reload is bit-exact.
namespace {

constexpr std::string_view kMagic = "rtsad-checkpoint";
constexpr int kVersion = 1;

void put_values(std::ostream& out, std::string_view key, std::span<const double> values) {
    std::string line(key);
    char buf[32];
    for (const double v : values) {
        const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
        line += ' ';
        line.append(buf, ptr);
    }
    line += '\n';
    out << line;
}

class Reader {
public:
    explicit Reader(std::istream& in) : in_(in) {}

    std::istringstream line(std::string_view key) {
        std::string text;
        while (std::getline(in_, text)) {
            ++line_no_;
            if (!text.empty() && text.back() == '\r') text.pop_back();
            if (!text.empty()) break;
        }
        std::istringstream ss(text);
        std::string got;
        ss >> got;
        if (got != key) fail("expected '" + std::string(key) + "', found '" + got + "'");
        return ss;
    }

    template <typename T>
    T scalar(std::string_view key) {
        auto ss = line(key);
        std::string tok;
        ss >> tok;
        return parse<T>(tok, key);
    }

    std::vector<double> values(std::string_view key, std::size_t expected) {
        auto ss = line(key);
        std::vector<double> out;
        out.reserve(expected);
        std::string tok;
        while (ss >> tok) out.push_back(parse<double>(tok, key));
        if (out.size() != expected) {
            fail("'" + std::string(key) + "' has " + std::to_string(out.size()) + " values, expected " +
                 std::to_string(expected));
        }
        return out;
    }

    template <typename T>
    T parse(const std::string& tok, std::string_view key) {
        T value{};
        const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
        if (ec != std::errc() || ptr != tok.data() + tok.size()) {
            fail("cannot parse '" + tok + "' for '" + std::string(key) + "'");
        }
        if constexpr (std::is_floating_point_v<T>) {
            if (!std::isfinite(value)) fail("non-finite value for '" + std::string(key) + "'");
        }
        return value;
    }

    [[noreturn]] void fail(const std::string& what) const {
        throw FormatError("checkpoint line " + std::to_string(line_no_) + ": " + what);
    }

private:
    std::istream& in_;
    std::size_t line_no_ = 0;
};

}  // namespace

void save_checkpoint(const Checkpoint& checkpoint, std::ostream& out) {
    const auto& m = checkpoint.model;
    out << kMagic << ' ' << kVersion << '\n';
    out << "kind " << to_string(m.kind) << '\n';
    out << "window " << m.window << '\n';
    out << "channels " << m.channels << '\n';
    out << "horizon " << m.horizon << '\n';
    out << "seed " << m.net.seed << '\n';
    out << "layers " << m.net.layers.size() << '\n';
    for (const auto& layer : m.net.layers) {
        out << "layer " << layer.inputs() << ' ' << layer.outputs() << ' ' << nn::to_string(layer.activation) << '\n';
        put_values(out, "weights", layer.weight.data);
        put_values(out, "bias", layer.bias);
    }
    if (checkpoint.normalizer) {
        out << "normalizer " << checkpoint.normalizer->mean.size() << '\n';
        put_values(out, "mean", checkpoint.normalizer->mean);
        put_values(out, "std", checkpoint.normalizer->stddev);
    } else {
        out << "normalizer none\n";
    }
    out << "end\n";
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write checkpoint '" + path.string() + "'");
    save_checkpoint(checkpoint, out);
    if (!out) throw FormatError("writing checkpoint '" + path.string() + "' failed");
}

Checkpoint load_checkpoint(std::istream& in) {
    Reader r(in);
    const int version = r.scalar<int>(kMagic);
    if (version != kVersion) r.fail("unsupported checkpoint version " + std::to_string(version));

    Checkpoint cp;
    auto& m = cp.model;
    {
        auto ss = r.line("kind");
        std::string kind;
        ss >> kind;
        try {
            m.kind = parse_model_kind(kind);
        } catch (const ConfigError& e) {
            r.fail(e.what());
        }
    }
    m.window = r.scalar<std::size_t>("window");
    m.channels = r.scalar<std::size_t>("channels");
    m.horizon = r.scalar<std::size_t>("horizon");
    m.net.seed = r.scalar<std::uint64_t>("seed");
    const auto n_layers = r.scalar<std::size_t>("layers");
    if (n_layers == 0) r.fail("checkpoint has no layers");
    for (std::size_t k = 0; k < n_layers; ++k) {
        auto ss = r.line("layer");
        std::size_t inputs = 0, outputs = 0;
        std::string act;
        if (!(ss >> inputs >> outputs >> act) || inputs == 0 || outputs == 0) r.fail("malformed layer header");
        nn::DenseLayer layer;
        try {
            layer.activation = nn::parse_activation(act);
        } catch (const ParseError& e) {
            r.fail(e.what());
        }
        layer.weight = nn::Matrix(outputs, inputs);
        layer.weight.data = r.values("weights", outputs * inputs);
        layer.bias = r.values("bias", outputs);
        if (!m.net.layers.empty() && m.net.layers.back().outputs() != inputs) r.fail("layer sizes do not chain");
        m.net.layers.push_back(std::move(layer));
    }
    if (m.window == 0 || m.channels == 0) r.fail("window and channels must be positive");
    if (m.kind == ModelKind::prediction && (m.horizon == 0 || m.horizon >= m.window)) r.fail("invalid horizon");
    if (m.kind == ModelKind::reconstruction && m.horizon != 0) r.fail("reconstruction models have horizon 0");
    if (m.net.input_size() != m.input_size() || m.net.output_size() != m.output_size()) {
        r.fail("network sizes do not match the model's window geometry");
    }

    {
        auto ss = r.line("normalizer");
        std::string tok;
        ss >> tok;
        if (tok != "none") {
            const auto d = r.parse<std::size_t>(tok, "normalizer");
            if (d != m.channels) r.fail("normalizer channel count does not match the model");
            data::Normalizer norm;
            norm.mean = r.values("mean", d);
            norm.stddev = r.values("std", d);
            for (const double s : norm.stddev)
                if (!(s > 0.0)) r.fail("normalizer std must be positive");
            cp.normalizer = std::move(norm);
        }
    }
    r.line("end");
    return cp;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open checkpoint '" + path.string() + "'");
    return load_checkpoint(in);
}

}  // namespace rtsad::models
