#include "rtsad/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

#include "rtsad/error.hpp"
#include "rtsad/random.hpp"

namespace rtsad::data {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    for (;;) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            cells.push_back(trim(line.substr(start)));
            return cells;
        }
        cells.push_back(trim(line.substr(start, comma - start)));
        start = comma + 1;
    }
}

std::optional<double> parse_double(std::string_view cell) {
    if (cell.empty()) return std::nullopt;
    if (cell.front() == '+') cell.remove_prefix(1);
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
    if (ec != std::errc() || ptr != cell.data() + cell.size()) return std::nullopt;
    return value;
}

void append_double(std::string& out, double v) {
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, ptr);
}

}  // namespace

void MultivariateSeries::validate() const {
    if (channel_names.size() != values.cols) {
        throw FormatError("series has " + std::to_string(values.cols) + " channels but " +
                          std::to_string(channel_names.size()) + " channel names");
    }
    if (values.data.size() != values.rows * values.cols) throw FormatError("series value buffer has wrong size");
    for (const double v : values.data) {
        if (!std::isfinite(v)) throw NumericError("series contains a non-finite value");
    }
    if (labels) {
        if (labels->size() != values.rows) throw FormatError("label count does not match series length");
        for (const auto l : *labels) {
            if (l > 1) throw FormatError("labels must be 0 or 1");
        }
    }
}

MultivariateSeries parse_csv(std::istream& in, std::string_view source) {
    const std::string src(source);
    std::string line;
    if (!std::getline(in, line)) throw FormatError(src + ": missing header row");
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);

    MultivariateSeries series;
    const auto header = split_commas(line);
    bool has_label = !header.empty() && header.back() == "label";
    const std::size_t d = header.size() - (has_label ? 1 : 0);
    if (d == 0) throw FormatError(src + ": header has no channel columns");
    for (std::size_t c = 0; c < d; ++c) {
        if (header[c].empty()) throw FormatError(src + ": empty channel name in column " + std::to_string(c + 1));
        series.channel_names.emplace_back(header[c]);
    }

    std::vector<double> values;
    std::vector<std::uint8_t> labels;
    std::size_t row = 0;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        ++row;
        const auto cells = split_commas(line);
        if (cells.size() != header.size()) {
            throw FormatError(src + ": row " + std::to_string(row) + " (line " + std::to_string(line_no) + ") has " +
                              std::to_string(cells.size()) + " cells, expected " + std::to_string(header.size()));
        }
        for (std::size_t c = 0; c < d; ++c) {
            const auto v = parse_double(cells[c]);
            if (!v || !std::isfinite(*v)) {
                throw ParseError(src + ": row " + std::to_string(row) + " (line " + std::to_string(line_no) +
                                 "), column " + std::to_string(c + 1) + " '" + series.channel_names[c] +
                                 "': cannot parse '" + std::string(cells[c]) + "' as a number");
            }
            values.push_back(*v);
        }
        if (has_label) {
            const auto cell = cells.back();
            if (cell != "0" && cell != "1") {
                throw ParseError(src + ": row " + std::to_string(row) + " (line " + std::to_string(line_no) +
                                 "), column 'label': expected 0 or 1, got '" + std::string(cell) + "'");
            }
            labels.push_back(cell == "1" ? 1 : 0);
        }
    }

    series.values.rows = row;
    series.values.cols = d;
    series.values.data = std::move(values);
    if (has_label) series.labels = std::move(labels);
    return series;
}

MultivariateSeries load_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open '" + path.string() + "'");
    return parse_csv(in, path.string());
}

void write_csv(const MultivariateSeries& series, std::ostream& out) {
    series.validate();
    std::string buf;
    for (std::size_t c = 0; c < series.channels(); ++c) {
        if (c) buf += ',';
        buf += series.channel_names[c];
    }
    if (series.labels) buf += ",label";
    buf += '\n';
    for (std::size_t t = 0; t < series.length(); ++t) {
        for (std::size_t c = 0; c < series.channels(); ++c) {
            if (c) buf += ',';
            append_double(buf, series.values(t, c));
        }
        if (series.labels) {
            buf += ',';
            buf += (*series.labels)[t] ? '1' : '0';
        }
        buf += '\n';
    }
    out << buf;
}

void write_csv(const MultivariateSeries& series, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write '" + path.string() + "'");
    write_csv(series, out);
    if (!out) throw FormatError("write to '" + path.string() + "' failed");
}

Normalizer fit_normalizer(const MultivariateSeries& train) {
    if (train.length() < 2) throw ShapeError("fitting a normalizer needs at least two timesteps");
    const std::size_t d = train.channels();
    const double n = static_cast<double>(train.length());
    Normalizer norm;
    norm.mean.assign(d, 0.0);
    norm.stddev.assign(d, 0.0);
    for (std::size_t t = 0; t < train.length(); ++t)
        for (std::size_t c = 0; c < d; ++c) norm.mean[c] += train.values(t, c);
    for (auto& m : norm.mean) m /= n;
    for (std::size_t t = 0; t < train.length(); ++t) {
        for (std::size_t c = 0; c < d; ++c) {
            const double diff = train.values(t, c) - norm.mean[c];
            norm.stddev[c] += diff * diff;
        }
    }
    for (auto& s : norm.stddev) s = std::max(std::sqrt(s / n), Normalizer::kStdFloor);
    return norm;
}

MultivariateSeries apply_normalizer(const Normalizer& normalizer, const MultivariateSeries& series) {
    if (normalizer.mean.size() != series.channels()) {
        throw ShapeError("normalizer has " + std::to_string(normalizer.mean.size()) + " channels, series has " +
                         std::to_string(series.channels()));
    }
    MultivariateSeries out = series;
    for (std::size_t t = 0; t < out.length(); ++t) {
        for (std::size_t c = 0; c < out.channels(); ++c) {
            double& v = out.values(t, c);
            v = (v - normalizer.mean[c]) / normalizer.stddev[c];
        }
    }
    return out;
}

std::vector<std::size_t> WindowSet::anomalous_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < windows.size(); ++i)
        if (windows[i].anomalous) out.push_back(i);
    return out;
}

WindowSet make_windows(const MultivariateSeries& series, std::size_t w, std::size_t stride) {
    if (w == 0) throw ShapeError("window length must be at least 1");
    if (stride == 0) throw ShapeError("window stride must be at least 1");
    const std::size_t T = series.length();
    if (w > T) {
        throw ShapeError("window length " + std::to_string(w) + " exceeds series length " + std::to_string(T) +
                         "; no windows can be cut");
    }
    const std::size_t d = series.channels();

    // Prefix counts of labeled timesteps give O(1) any-overlap checks.
    std::vector<std::size_t> labeled_prefix(T + 1, 0);
    if (series.labels) {
        for (std::size_t t = 0; t < T; ++t) labeled_prefix[t + 1] = labeled_prefix[t] + (*series.labels)[t];
    }

    WindowSet set;
    set.length = w;
    set.channels = d;
    set.windows.reserve((T - w) / stride + 1);
    for (std::size_t origin = 0; origin + w <= T; origin += stride) {
        Window win;
        win.origin = origin;
        win.values = nn::Matrix(w, d);
        std::copy_n(series.values.data.begin() + static_cast<std::ptrdiff_t>(origin * d), w * d,
                    win.values.data.begin());
        win.anomalous = labeled_prefix[origin + w] > labeled_prefix[origin];
        set.windows.push_back(std::move(win));
    }
    return set;
}

WindowSet subset(const WindowSet& set, std::span<const std::size_t> indices) {
    WindowSet out;
    out.length = set.length;
    out.channels = set.channels;
    out.windows.reserve(indices.size());
    for (const std::size_t i : indices) {
        if (i >= set.size()) throw ShapeError("window index " + std::to_string(i) + " out of range");
        out.windows.push_back(set.windows[i]);
    }
    return out;
}

std::string_view to_string(AnomalyType type) {
    switch (type) {
        case AnomalyType::spike: return "spike";
        case AnomalyType::level_shift: return "level_shift";
        case AnomalyType::frequency_change: return "frequency_change";
    }
    return "spike";
}

AnomalyType parse_anomaly_type(std::string_view name) {
    if (name == "spike") return AnomalyType::spike;
    if (name == "level_shift") return AnomalyType::level_shift;
    if (name == "frequency_change") return AnomalyType::frequency_change;
    throw ConfigError("unknown anomaly type '" + std::string(name) + "'");
}

void SyntheticConfig::validate() const {
    if (channels == 0) throw ConfigError("synthetic config: channels must be >= 1");
    if (periods.empty()) throw ConfigError("synthetic config: at least one seasonal period is required");
    for (const double p : periods) {
        if (!(p >= 2.0) || !std::isfinite(p)) throw ConfigError("synthetic config: periods must be finite and >= 2");
    }
    const double longest = *std::max_element(periods.begin(), periods.end());
    const std::size_t test_len = test_length ? test_length : length;
    if (static_cast<double>(length) < 10.0 * longest || static_cast<double>(test_len) < 10.0 * longest) {
        throw ConfigError("synthetic config: series length must be at least 10x the longest period");
    }
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
        throw ConfigError("synthetic config: noise sigma must be finite and >= 0");
    }
    if (!(anomaly_rate >= 0.0 && anomaly_rate <= 0.5)) {
        throw ConfigError("synthetic config: anomaly rate must lie in [0, 0.5]");
    }
    if (anomaly_rate > 0.0 && anomaly_types.empty()) {
        throw ConfigError("synthetic config: anomaly types must be non-empty when anomaly rate > 0");
    }
    if (!(spike_min_sigma >= 5.0) || !(spike_max_sigma >= spike_min_sigma) || !std::isfinite(spike_max_sigma)) {
        throw ConfigError("synthetic config: spike magnitudes must satisfy 5 <= min <= max");
    }
}

namespace {

struct ChannelShape {
    std::vector<double> amplitude;  // one per period
    std::vector<double> phase;
};

double seasonal(const ChannelShape& shape, const std::vector<double>& periods, double t) {
    double v = 0.0;
    for (std::size_t k = 0; k < periods.size(); ++k) {
        v += shape.amplitude[k] * std::sin(2.0 * std::numbers::pi * t / periods[k] + shape.phase[k]);
    }
    return v;
}

struct Segment {
    std::size_t start;
    std::size_t length;
};

// Lengths are drawn per type; spikes are short, the others span several steps.
std::size_t draw_segment_length(AnomalyType type, Rng& rng) {
    switch (type) {
        case AnomalyType::spike: return 1 + static_cast<std::size_t>(rng.below(3));
        case AnomalyType::level_shift: return 20 + static_cast<std::size_t>(rng.below(41));
        case AnomalyType::frequency_change: return 30 + static_cast<std::size_t>(rng.below(51));
    }
    return 1;
}

}  // namespace

SyntheticDataset generate_synthetic(const SyntheticConfig& config) {
    config.validate();
    const std::size_t d = config.channels;
    const std::size_t train_len = config.length;
    const std::size_t test_len = config.test_length ? config.test_length : config.length;

    Rng rng(derive_seed(config.seed, {tag_hash("synthetic")}));
    std::vector<ChannelShape> shapes(d);
    for (auto& shape : shapes) {
        for (std::size_t k = 0; k < config.periods.size(); ++k) {
            shape.amplitude.push_back(rng.uniform(0.5, 1.5));
            shape.phase.push_back(rng.uniform(0.0, 2.0 * std::numbers::pi));
        }
    }

    auto make_series = [&](std::size_t len, std::size_t t0, Rng& noise) {
        MultivariateSeries s;
        for (std::size_t c = 0; c < d; ++c) s.channel_names.push_back("ch" + std::to_string(c));
        s.values = nn::Matrix(len, d);
        for (std::size_t t = 0; t < len; ++t) {
            for (std::size_t c = 0; c < d; ++c) {
                s.values(t, c) = seasonal(shapes[c], config.periods, static_cast<double>(t0 + t)) +
                                 config.noise_sigma * noise.normal();
            }
        }
        s.labels = std::vector<std::uint8_t>(len, 0);
        return s;
    };

    Rng train_noise(derive_seed(config.seed, {tag_hash("train-noise")}));
    Rng test_noise(derive_seed(config.seed, {tag_hash("test-noise")}));
    SyntheticDataset out;
    out.train = make_series(train_len, 0, train_noise);
    // The test segment continues the same process right after the train segment.
    out.test = make_series(test_len, train_len, test_noise);

    const std::size_t target = round_count(config.anomaly_rate * static_cast<double>(test_len));
    if (target == 0) return out;

    std::vector<double> channel_std(d, 0.0);
    {
        const Normalizer n = fit_normalizer(out.test);
        channel_std = n.stddev;
    }

    Rng arng(derive_seed(config.seed, {tag_hash("anomalies")}));
    auto& labels = *out.test.labels;
    std::size_t labeled = 0;
    std::size_t attempts = 0;
    const std::size_t max_attempts = 100000;
    while (labeled < target) {
        if (++attempts > max_attempts) {
            throw ConfigError("synthetic config: could not place anomaly segments at the requested rate");
        }
        const AnomalyType type = config.anomaly_types[arng.below(config.anomaly_types.size())];
        std::size_t len = std::min(draw_segment_length(type, arng), target - labeled);
        if (len > test_len) continue;
        const std::size_t start = static_cast<std::size_t>(arng.below(test_len - len + 1));
        // Keep a one-step gap around segments so they stay distinct.
        const std::size_t lo = start > 0 ? start - 1 : 0;
        const std::size_t hi = std::min(test_len, start + len + 1);
        if (std::any_of(labels.begin() + static_cast<std::ptrdiff_t>(lo), labels.begin() + static_cast<std::ptrdiff_t>(hi),
                        [](std::uint8_t l) { return l != 0; })) {
            continue;
        }

        // Every anomaly touches a random non-empty subset of channels.
        std::vector<std::size_t> touched;
        for (std::size_t c = 0; c < d; ++c)
            if (arng.uniform() < 0.5) touched.push_back(c);
        if (touched.empty()) touched.push_back(static_cast<std::size_t>(arng.below(d)));

        for (const std::size_t c : touched) {
            const double sign = arng.uniform() < 0.5 ? -1.0 : 1.0;
            switch (type) {
                case AnomalyType::spike: {
                    const double unit = config.noise_sigma > 0.0 ? config.noise_sigma : channel_std[c];
                    const double mag = arng.uniform(config.spike_min_sigma, config.spike_max_sigma) * unit;
                    for (std::size_t t = start; t < start + len; ++t) out.test.values(t, c) += sign * mag;
                    break;
                }
                case AnomalyType::level_shift: {
                    const double shift = arng.uniform(2.0, 4.0) * channel_std[c];
                    for (std::size_t t = start; t < start + len; ++t) out.test.values(t, c) += sign * shift;
                    break;
                }
                case AnomalyType::frequency_change: {
                    // Replace the seasonal component by a time-compressed copy.
                    const double factor = arng.uniform(2.0, 3.0);
                    for (std::size_t t = start; t < start + len; ++t) {
                        const double abs_t = static_cast<double>(train_len + t);
                        const double warped = static_cast<double>(train_len + start) +
                                              factor * static_cast<double>(t - start);
                        out.test.values(t, c) += seasonal(shapes[c], config.periods, warped) -
                                                 seasonal(shapes[c], config.periods, abs_t);
                    }
                    break;
                }
            }
        }
        for (std::size_t t = start; t < start + len; ++t) labels[t] = 1;
        labeled += len;
    }
    return out;
}

std::size_t round_count(double x) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw ConfigError("count must be finite and non-negative");
    return static_cast<std::size_t>(std::floor(x + 0.5));
}

ContaminatedSet inject_contamination(const WindowSet& train, const ContaminationSpec& spec) {
    if (!(spec.ratio >= 0.0 && spec.ratio <= ContaminationSpec::kMaxRatio)) {
        throw ContaminationError("contamination ratio must lie in [0, 0.2]");
    }
    for (const auto& w : train.windows) {
        if (w.anomalous) throw ContaminationError("training windows must all be flagged normal before injection");
    }
    ContaminatedSet out;
    out.windows = train;
    const std::size_t n = train.size();
    const std::size_t k = round_count(spec.ratio * static_cast<double>(n));
    if (k == 0) return out;

    if (spec.pool.empty()) throw ContaminationError("anomaly pool is empty but the contamination ratio is positive");
    if (spec.pool.length != train.length || spec.pool.channels != train.channels) {
        throw ContaminationError("anomaly pool windows do not match the training window shape");
    }
    for (const auto& w : spec.pool.windows) {
        if (!w.anomalous) throw ContaminationError("anomaly pool contains a window not flagged anomalous");
    }

    Rng rng(spec.seed);
    // Partial Fisher-Yates picks k distinct positions.
    std::vector<std::size_t> positions(n);
    for (std::size_t i = 0; i < n; ++i) positions[i] = i;
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
        std::swap(positions[i], positions[j]);
    }
    positions.resize(k);
    std::sort(positions.begin(), positions.end());

    std::vector<std::size_t> draws;
    const std::size_t m = spec.pool.size();
    if (m >= k) {
        std::vector<std::size_t> order(m);
        for (std::size_t i = 0; i < m; ++i) order[i] = i;
        for (std::size_t i = 0; i < k; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(rng.below(m - i));
            std::swap(order[i], order[j]);
        }
        draws.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
    } else {
        for (std::size_t i = 0; i < k; ++i) draws.push_back(static_cast<std::size_t>(rng.below(m)));
    }

    for (std::size_t i = 0; i < k; ++i) {
        Window& target = out.windows.windows[positions[i]];
        const Window& source = spec.pool.windows[draws[i]];
        target.values = source.values;
        target.anomalous = true;
    }
    out.injected = std::move(positions);
    return out;
}

IndexSplit split_indices(std::span<const std::size_t> items, std::uint64_t seed) {
    const std::size_t n = items.size();
    if (n < 5) throw SplitError("a 4:1 train/validation split needs at least 5 windows, got " + std::to_string(n));
    const std::size_t n_val = round_count(static_cast<double>(n) / 5.0);

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(seed);
    for (std::size_t i = 0; i < n_val; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
        std::swap(order[i], order[j]);
    }
    std::vector<std::uint8_t> in_val(n, 0);
    for (std::size_t i = 0; i < n_val; ++i) in_val[order[i]] = 1;

    IndexSplit split;
    split.train.reserve(n - n_val);
    split.val.reserve(n_val);
    for (std::size_t i = 0; i < n; ++i) (in_val[i] ? split.val : split.train).push_back(items[i]);
    return split;
}

TrainValSplit split_train_val(const WindowSet& windows, std::uint64_t seed) {
    std::vector<std::size_t> all(windows.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    const IndexSplit idx = split_indices(all, seed);
    return {subset(windows, idx.train), subset(windows, idx.val)};
}

}  // namespace rtsad::data
