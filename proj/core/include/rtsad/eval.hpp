#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>

namespace rtsad::eval {

/// Area under the ROC curve as the Mann-Whitney statistic: the probability
/// that a random positive outscores a random negative, ties counting one half.
/// Throws MetricError unless both classes are present.
double auc_roc(std::span<const double> scores, std::span<const std::uint8_t> labels);

struct BestF1 {
    double f1 = 0.0;
    double threshold = 0.0;  // smallest threshold reaching f1; score >= threshold flags an anomaly
};

/// Maximum F1 over every threshold at an observed score (plus the empty
/// prediction, whose F1 is 0). Throws MetricError if there is no positive label.
BestF1 best_f1(std::span<const double> scores, std::span<const std::uint8_t> labels);

/// F1 of the rule "score >= threshold".
double f1_at(std::span<const double> scores, std::span<const std::uint8_t> labels, double threshold);

/// |injected ∩ discarded| / |injected| in [0, 1]; nullopt when nothing was injected.
std::optional<double> coverage(std::span<const std::size_t> injected, std::span<const std::size_t> discarded);

}  // namespace rtsad::eval
