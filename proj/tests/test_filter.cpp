#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "rtsad/data.hpp"
#include "rtsad/error.hpp"
#include "rtsad/filter.hpp"
#include "rtsad/models.hpp"
#include "test_support.hpp"

using namespace rtsad;
using namespace rtsad::filter;

namespace {

LossTrace trace_of(std::initializer_list<std::vector<double>> rows) {
    LossTrace t;
    t.losses = nn::Matrix(rows.size(), rows.begin()->size());
    std::size_t i = 0;
    for (const auto& r : rows) {
        for (std::size_t j = 0; j < r.size(); ++j) t.losses(i, j) = r[j];
        ++i;
    }
    return t;
}

double brute_mean(std::span<const double> row) {
    double s = 0;
    for (std::size_t e = 1; e < row.size(); ++e) s += row[e];
    return s / static_cast<double>(row.size() - 1);
}

double brute_pop_std_of_deltas(std::span<const double> row) {
    std::vector<double> d;
    for (std::size_t e = 1; e < row.size(); ++e) d.push_back(row[e] - row[e - 1]);
    const double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
    double ss = 0;
    for (const double x : d) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(d.size()));
}

double sort_and_index(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size()) - 1e-9));
    return v[std::clamp<std::size_t>(rank, 1, v.size()) - 1];
}

std::vector<double> distinct_values(Rng& rng, std::size_t n) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<double>(i) + rng.uniform(0.0, 0.5);
    rng.shuffle(v);
    return v;
}

models::ModelFactory tiny_factory() {
    models::ModelSpec spec;
    spec.kind = models::ModelKind::reconstruction;
    spec.window = 4;
    spec.channels = 2;
    spec.hidden = {3};
    return models::make_factory(spec);
}

data::WindowSet tiny_windows(std::size_t T = 80) {
    return data::make_windows(fixtures::toy_series(T, 2, 3), 4, 1);
}

}  // namespace

TEST(MetricM, Examples) {
    EXPECT_EQ(metric_m(trace_of({{5, 1, 1, 1}}))[0], 1.0);
    EXPECT_EQ(metric_m(trace_of({{9, 3, 2, 1}}))[0], 2.0);
}

TEST(MetricV, Examples) {
    EXPECT_EQ(metric_v(trace_of({{4, 3, 2, 1}}))[0], 0.0);
    EXPECT_NEAR(metric_v(trace_of({{1, 2, 1, 2}}))[0], std::sqrt(8.0 / 9.0), 1e-15);
    EXPECT_NEAR(metric_v(trace_of({{1, 2, 1, 2}}))[0], 0.9428090415820634, 1e-15);
}

TEST(Metrics, MatchBruteForceOnRandomTraces) {
    Rng rng(101);
    for (int trial = 0; trial < 300; ++trial) {
        const auto t = fixtures::random_trace(rng, 1 + rng.below(50), 1 + rng.below(20));
        const auto m = metric_m(t), v = metric_v(t);
        for (std::size_t i = 0; i < t.samples(); ++i) {
            EXPECT_NEAR(m[i], brute_mean(t.row(i)), 1e-12);
            EXPECT_NEAR(v[i], brute_pop_std_of_deltas(t.row(i)), 1e-12);
        }
    }
}

TEST(Metrics, SingleTrialEpochGivesZeroV) {
    const auto t = trace_of({{3, 1}, {0.5, 2}});
    EXPECT_EQ(metric_v(t), (std::vector<double>{0.0, 0.0}));
    EXPECT_EQ(metric_m(t), (std::vector<double>{1.0, 2.0}));
}

TEST(Metrics, InvalidTracesRejected) {
    EXPECT_ANY_THROW(metric_m(trace_of({{1.0}})));
    EXPECT_ANY_THROW(metric_v(trace_of({{1.0, -1.0}})));
    EXPECT_ANY_THROW(metric_v(trace_of({{1.0, std::nan("")}})));
}

TEST(Quantile, Examples) {
    std::vector<double> v(10);
    std::iota(v.begin(), v.end(), 1.0);
    EXPECT_EQ(quantile_rank(10, 0.8), 8u);
    EXPECT_EQ(quantile_rank(10, 1.0 - 0.2), 8u);
    EXPECT_EQ(quantile_threshold(v, 0.8), 8.0);
    const std::vector<double> same(7, 2.5);
    for (const double q : {0.1, 0.5, 0.8, 0.99}) EXPECT_EQ(quantile_threshold(same, q), 2.5);
    EXPECT_EQ(quantile_rank(10, 0.81), 9u);
    EXPECT_EQ(quantile_rank(3, 0.01), 1u);
}

TEST(Quantile, MatchesSortAndIndex) {
    Rng rng(7);
    for (int trial = 0; trial < 500; ++trial) {
        const auto n = 1 + rng.below(60);
        std::vector<double> v(n);
        for (auto& x : v) x = std::floor(rng.uniform(0, 10)) / 2.0;  // plenty of ties
        const double q = rng.uniform(0.01, 0.99);
        EXPECT_EQ(quantile_threshold(v, q), sort_and_index(v, q));
    }
}

TEST(SelectDiscard, MOnlyTopTwoOfTen) {
    std::vector<double> m(10), v(10, 0.0);
    std::iota(m.begin(), m.end(), 1.0);
    std::iota(v.begin(), v.end(), 0.0);
    const auto r = select_discard(m, v, 0.2, Method::m_only);
    EXPECT_EQ(r.s_m, (std::vector<std::size_t>{8, 9}));
    EXPECT_EQ(r.discard, r.s_m);
    EXPECT_EQ(*r.threshold_m, 8.0);
}

TEST(SelectDiscard, VanillaDiscardsNothing) {
    Rng rng(3);
    const auto m = distinct_values(rng, 30), v = distinct_values(rng, 30);
    EXPECT_TRUE(select_discard(m, v, 0.2, Method::vanilla).discard.empty());
}

TEST(SelectDiscard, IdenticalMetricsUnionIsIdempotent) {
    Rng rng(4);
    const auto m = distinct_values(rng, 25);
    const auto r = select_discard(m, m, 0.2, Method::combined);
    EXPECT_EQ(r.discard, r.s_m);
    EXPECT_EQ(r.s_m, r.s_v);
}

TEST(SelectDiscard, TiesAtThresholdAreKept) {
    const std::vector<double> m{1, 2, 2, 2, 2}, v{0, 0, 0, 1, 1};
    const auto r = select_discard(m, v, 0.2, Method::combined);
    EXPECT_TRUE(r.s_m.empty());
    EXPECT_TRUE(r.s_v.empty());
}

TEST(SelectDiscard, AllDiscardedIsFilterError) {
    const std::vector<double> m{0, 1}, v{1, 0};
    EXPECT_NO_THROW(select_discard(m, m, 0.5, Method::combined));
    EXPECT_THROW(select_discard(m, v, 0.5, Method::combined), FilterError);
}

TEST(SelectDiscard, CardinalityProperty) {
    Rng rng(55);
    for (int trial = 0; trial < 300; ++trial) {
        const auto n = 5 + rng.below(200);
        const double tau = rng.uniform(0.05, 0.5);
        const auto m = distinct_values(rng, n), v = distinct_values(rng, n);
        const auto r = select_discard(m, v, tau, Method::combined);
        const auto expected = n - static_cast<std::size_t>(std::ceil((1 - tau) * static_cast<double>(n) - 1e-9));
        EXPECT_EQ(r.s_m.size(), expected);
        EXPECT_EQ(r.s_v.size(), expected);
        EXPECT_GE(r.discard.size(), std::max(r.s_m.size(), r.s_v.size()));
        EXPECT_LE(r.discard.size(), r.s_m.size() + r.s_v.size());
        std::set<std::size_t> u(r.s_m.begin(), r.s_m.end());
        u.insert(r.s_v.begin(), r.s_v.end());
        EXPECT_EQ(std::vector<std::size_t>(u.begin(), u.end()), r.discard);
    }
}

TEST(SelectDiscard, InvariantUnderIncreasingAffineMaps) {
    Rng rng(56);
    for (int trial = 0; trial < 200; ++trial) {
        const auto n = 5 + rng.below(100);
        const auto m = distinct_values(rng, n), v = distinct_values(rng, n);
        const double a = rng.uniform(0.1, 10), b = rng.uniform(-5, 5);
        std::vector<double> m2(n);
        for (std::size_t i = 0; i < n; ++i) m2[i] = a * m[i] + b;
        EXPECT_EQ(select_discard(m, v, 0.2, Method::m_only).s_m, select_discard(m2, v, 0.2, Method::m_only).s_m);
    }
}

TEST(SelectDiscard, AffineTracesNeverEnterSv) {
    Rng rng(57);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 10 + rng.below(40), N = 1 + rng.below(12);
        auto t = fixtures::random_trace(rng, n, N);
        std::vector<std::size_t> affine;
        for (std::size_t i = 0; i < n; i += 3) {
            // Dyadic intercept and slope keep every entry and difference exact.
            const double a = static_cast<double>(100 + rng.below(64)) / 8.0;
            const double b = -static_cast<double>(rng.below(24)) / 8.0;
            for (std::size_t e = 0; e <= N; ++e) t.losses(i, e) = a + b * static_cast<double>(e) / 4.0;
            affine.push_back(i);
        }
        const auto v = metric_v(t);
        for (const auto i : affine) EXPECT_EQ(v[i], 0.0);
        if (std::any_of(v.begin(), v.end(), [](double x) { return x > 0; })) {
            const auto r = select_discard(metric_m(t), v, 0.2, Method::v_only);
            for (const auto i : affine) EXPECT_FALSE(std::binary_search(r.s_v.begin(), r.s_v.end(), i));
        }
    }
}

TEST(FilterReport, JsonRoundTrip) {
    Rng rng(8);
    const auto m = distinct_values(rng, 20), v = distinct_values(rng, 20);
    const auto r = select_discard(m, v, 0.2, Method::combined);
    const auto back = FilterReport::from_json(r.to_json());
    EXPECT_EQ(back.method, r.method);
    EXPECT_EQ(back.tau, r.tau);
    EXPECT_EQ(back.samples, r.samples);
    EXPECT_EQ(back.m, r.m);
    EXPECT_EQ(back.v, r.v);
    EXPECT_EQ(back.threshold_m, r.threshold_m);
    EXPECT_EQ(back.threshold_v, r.threshold_v);
    EXPECT_EQ(back.s_m, r.s_m);
    EXPECT_EQ(back.s_v, r.s_v);
    EXPECT_EQ(back.discard, r.discard);
    EXPECT_THROW(FilterReport::from_json("{}"), ParseError);
}

TEST(Method, Names) {
    EXPECT_EQ(parse_method("m"), Method::m_only);
    EXPECT_EQ(parse_method("v"), Method::v_only);
    EXPECT_EQ(parse_method("combined"), Method::combined);
    EXPECT_EQ(parse_method(to_string(Method::vanilla)), Method::vanilla);
    EXPECT_THROW(parse_method("both"), ConfigError);
}

TEST(RobustConfig, Defaults) {
    const RobustTrainConfig c;
    EXPECT_EQ(c.tau, 0.2);
    EXPECT_EQ(c.trial_epochs, 10u);
    auto bad = c;
    bad.tau = 1.0;
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = c;
    bad.trial_epochs = 0;
    EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(TrialTraces, ShapeAndDeterminism) {
    const auto windows = tiny_windows();
    models::TrainConfig cfg;
    cfg.seed = 3;
    const auto one = record_trial_traces(tiny_factory(), windows, 1, cfg);
    EXPECT_EQ(one.losses.cols, 2u);
    EXPECT_EQ(one.samples(), windows.size());
    const auto a = record_trial_traces(tiny_factory(), windows, 4, cfg);
    const auto b = record_trial_traces(tiny_factory(), windows, 4, cfg);
    EXPECT_EQ(a.losses, b.losses);
}

TEST(TrialTraces, ColumnsAreFullEvaluationPasses) {
    const auto windows = tiny_windows();
    models::TrainConfig cfg;
    cfg.seed = 9;
    cfg.batch_size = 8;
    const std::size_t N = 3;
    const auto trace = record_trial_traces(tiny_factory(), windows, N, cfg);

    models::TrainingState st(tiny_factory()(derive_seed(cfg.seed, {tag_hash("trial-init")})), cfg.learning_rate);
    std::vector<std::size_t> all(windows.size());
    std::iota(all.begin(), all.end(), 0);
    for (std::size_t e = 0; e <= N; ++e) {
        if (e > 0) models::train_epoch(st, windows, all, cfg, e);
        for (std::size_t i = 0; i < windows.size(); ++i)
            EXPECT_NEAR(trace.losses(i, e), models::sample_loss(st.model, windows[i]), 1e-15);
    }
}

TEST(RobustTrain, VanillaEqualsFinalPhaseWithEmptyDiscard) {
    const auto windows = tiny_windows();
    RobustTrainConfig rc;
    rc.method = Method::vanilla;
    rc.train.epochs = 5;
    rc.train.seed = 21;
    const auto r = robust_train(tiny_factory(), windows, rc);
    EXPECT_TRUE(r.report.discard.empty());
    EXPECT_EQ(r.retained.size(), windows.size());

    std::vector<std::size_t> all(windows.size());
    std::iota(all.begin(), all.end(), 0);
    const auto split = data::split_indices(all, derive_seed(21, {tag_hash("split")}));
    auto cfg = rc.train;
    cfg.seed = derive_seed(21, {tag_hash("final")});
    const auto direct = models::fit(tiny_factory()(derive_seed(21, {tag_hash("final-init")})), windows, split.train,
                                    split.val, cfg);
    EXPECT_EQ(r.model, direct.model);
}

TEST(RobustTrain, DiscardedWindowsDoNotTouchTheModel) {
    const auto windows = tiny_windows(120);
    RobustTrainConfig rc;
    rc.method = Method::combined;
    rc.trial_epochs = 3;
    rc.train.epochs = 4;
    rc.train.seed = 5;
    const auto r = robust_train(tiny_factory(), windows, rc);
    ASSERT_FALSE(r.report.discard.empty());
    EXPECT_EQ(r.retained.size() + r.report.discard.size(), windows.size());

    // Retrain on the physically reduced set with the same seeds.
    const auto reduced = data::subset(windows, r.retained);
    std::vector<std::size_t> positions(reduced.size());
    std::iota(positions.begin(), positions.end(), 0);
    const auto split = data::split_indices(positions, derive_seed(5, {tag_hash("split")}));
    auto cfg = rc.train;
    cfg.seed = derive_seed(5, {tag_hash("final")});
    const auto direct = models::fit(tiny_factory()(derive_seed(5, {tag_hash("final-init")})), reduced, split.train,
                                    split.val, cfg);
    EXPECT_EQ(r.model, direct.model);
}

TEST(RobustTrain, RatioZeroDiscardsQuantileCount) {
    const auto windows = tiny_windows(105);
    for (const auto method : {Method::m_only, Method::v_only}) {
        RobustTrainConfig rc;
        rc.method = method;
        rc.trial_epochs = 2;
        rc.train.epochs = 2;
        rc.train.seed = 8;
        const auto r = robust_train(tiny_factory(), windows, rc);
        const auto n = windows.size();
        EXPECT_EQ(r.report.discard.size(), n - quantile_rank(n, 0.8));
    }
}
