#include "rtsad/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <unordered_set>
#include <vector>

#include "rtsad/error.hpp"

namespace rtsad::eval {

namespace {

void check_inputs(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    if (scores.size() != labels.size()) {
        throw ShapeError("score count " + std::to_string(scores.size()) + " differs from label count " +
                         std::to_string(labels.size()));
    }
    for (const double s : scores) {
        if (std::isnan(s)) throw NumericError("scores must not be NaN");
    }
    for (const auto l : labels) {
        if (l > 1) throw ShapeError("labels must be 0 or 1");
    }
}

// Indices sorted by descending score.
std::vector<std::size_t> descending_order(std::span<const double> scores) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    return order;
}

}  // namespace

double auc_roc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    check_inputs(scores, labels);
    const std::size_t positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
    const std::size_t negatives = labels.size() - positives;
    if (positives == 0 || negatives == 0) throw MetricError("AUC-ROC needs both positive and negative labels");

    // Walk tie groups from the lowest score up; every positive in a group beats
    // all negatives below it and ties with the negatives inside it.
    auto order = descending_order(scores);
    std::reverse(order.begin(), order.end());
    double wins = 0.0;
    std::size_t negatives_below = 0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        std::size_t pos_group = 0;
        std::size_t neg_group = 0;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            (labels[order[j]] ? pos_group : neg_group) += 1;
            ++j;
        }
        wins += static_cast<double>(pos_group) *
                (static_cast<double>(negatives_below) + 0.5 * static_cast<double>(neg_group));
        negatives_below += neg_group;
        i = j;
    }
    return wins / (static_cast<double>(positives) * static_cast<double>(negatives));
}

BestF1 best_f1(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    check_inputs(scores, labels);
    const std::size_t positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
    if (positives == 0) throw MetricError("best F1 needs at least one positive label");

    const auto order = descending_order(scores);
    BestF1 best;
    best.threshold = std::numeric_limits<double>::infinity();  // empty prediction, F1 = 0
    std::size_t tp = 0;
    std::size_t predicted = 0;
    for (std::size_t i = 0; i < order.size();) {
        const double threshold = scores[order[i]];
        while (i < order.size() && scores[order[i]] == threshold) {
            tp += labels[order[i]];
            ++predicted;
            ++i;
        }
        const double f1 = 2.0 * static_cast<double>(tp) / static_cast<double>(predicted + positives);
        // Thresholds decrease along the walk, so >= keeps the smallest one.
        if (f1 >= best.f1 && tp > 0) {
            best.f1 = f1;
            best.threshold = threshold;
        }
    }
    return best;
}

double f1_at(std::span<const double> scores, std::span<const std::uint8_t> labels, double threshold) {
    check_inputs(scores, labels);
    std::size_t tp = 0;
    std::size_t predicted = 0;
    std::size_t positives = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        positives += labels[i];
        if (scores[i] >= threshold) {
            ++predicted;
            tp += labels[i];
        }
    }
    if (tp == 0) return 0.0;
    return 2.0 * static_cast<double>(tp) / static_cast<double>(predicted + positives);
}

std::optional<double> coverage(std::span<const std::size_t> injected, std::span<const std::size_t> discarded) {
    if (injected.empty()) return std::nullopt;
    const std::unordered_set<std::size_t> dropped(discarded.begin(), discarded.end());
    const std::unordered_set<std::size_t> unique_injected(injected.begin(), injected.end());
    std::size_t hit = 0;
    for (const std::size_t i : unique_injected) hit += dropped.count(i);
    return static_cast<double>(hit) / static_cast<double>(unique_injected.size());
}

}  // namespace rtsad::eval
