#include <benchmark/benchmark.h>

#include <numeric>
#include <vector>

#include "rtsad/data.hpp"
#include "rtsad/eval.hpp"
#include "rtsad/filter.hpp"
#include "rtsad/models.hpp"
#include "rtsad/nn.hpp"
#include "rtsad/random.hpp"

using namespace rtsad;

namespace {

data::MultivariateSeries noise_series(std::size_t T, std::size_t d, std::uint64_t seed) {
    Rng rng(seed);
    data::MultivariateSeries s;
    for (std::size_t c = 0; c < d; ++c) s.channel_names.push_back("c" + std::to_string(c));
    s.values = nn::Matrix(T, d);
    for (auto& v : s.values.data) v = rng.normal();
    s.labels = std::vector<std::uint8_t>(T, 0);
    for (std::size_t t = 0; t < T; t += 97) (*s.labels)[t] = 1;
    return s;
}

}  // namespace

// Forward + backward of one sample; arg = hidden width.
static void BM_ForwardBackward(benchmark::State& state) {
    const auto h = static_cast<std::size_t>(state.range(0));
    const std::vector<std::size_t> sizes{48, h, 48};
    const auto net = nn::init_network(sizes, nn::Activation::tanh, nn::Activation::identity, 1);
    std::vector<double> x(48, 0.1), t(48, 0.2);
    auto grads = nn::Gradients::zeros_like(net);
    nn::Workspace ws(net);
    for (auto _ : state) {
        grads.set_zero();
        benchmark::DoNotOptimize(nn::accumulate_gradients(net, x, t, grads, 1.0, ws));
    }
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_ForwardBackward)->Arg(8)->Arg(16)->Arg(32)->Arg(64);

// One training epoch over n windows (w=12, d=4).
static void BM_TrainEpoch(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto windows = data::make_windows(noise_series(n + 11, 4, 2), 12, 1);
    std::vector<std::size_t> all(windows.size());
    std::iota(all.begin(), all.end(), 0);
    models::TrainConfig cfg;
    models::TrainingState st(models::build_model(models::ModelKind::reconstruction, 12, 4, 0, {16}, 3),
                             cfg.learning_rate);
    std::size_t epoch = 0;
    for (auto _ : state) models::train_epoch(st, windows, all, cfg, ++epoch);
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_TrainEpoch)->Arg(1000)->Arg(5000)->Unit(benchmark::kMillisecond);

static void BM_AnomalyScores(benchmark::State& state) {
    const auto T = static_cast<std::size_t>(state.range(0));
    const auto series = noise_series(T, 4, 4);
    const auto model = models::build_model(models::ModelKind::reconstruction, 12, 4, 0, {16}, 5);
    for (auto _ : state) benchmark::DoNotOptimize(models::anomaly_scores(model, series));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(T));
}
BENCHMARK(BM_AnomalyScores)->Arg(2000)->Arg(20000)->Unit(benchmark::kMillisecond);

static void BM_AucRoc(benchmark::State& state) {
    const auto s = noise_series(static_cast<std::size_t>(state.range(0)), 1, 6);
    for (auto _ : state) benchmark::DoNotOptimize(eval::auc_roc(s.values.data, *s.labels));
}
BENCHMARK(BM_AucRoc)->Arg(1000)->Arg(20000)->Arg(200000);

static void BM_BestF1(benchmark::State& state) {
    const auto s = noise_series(static_cast<std::size_t>(state.range(0)), 1, 7);
    for (auto _ : state) benchmark::DoNotOptimize(eval::best_f1(s.values.data, *s.labels));
}
BENCHMARK(BM_BestF1)->Arg(1000)->Arg(20000)->Arg(200000);

static void BM_SelectDiscard(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    Rng rng(8);
    std::vector<double> m(n), v(n);
    for (std::size_t i = 0; i < n; ++i) {
        m[i] = rng.uniform();
        v[i] = rng.uniform();
    }
    for (auto _ : state) benchmark::DoNotOptimize(filter::select_discard(m, v, 0.2, filter::Method::combined));
}
BENCHMARK(BM_SelectDiscard)->Arg(10000)->Arg(100000);
BENCHMARK_MAIN();
