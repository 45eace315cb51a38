#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace holmes {

// Labels in {0,1} paired with real scores. Constructor checks equal, non-zero lengths.
struct LabeledScores {
    LabeledScores(std::span<const std::uint8_t> labels, std::span<const double> scores);

    std::span<const std::uint8_t> labels;
    std::span<const double> scores;
};

// Mann-Whitney statistic: P(pos > neg) + 0.5 P(tie). Throws UndefinedMetricError unless both classes present.
double roc_auc(const LabeledScores& d);

// Average precision, sum over descending-score thresholds of (R_k - R_{k-1}) * P_k.
// Tied scores form a single threshold. Throws UndefinedMetricError with no positives.
double pr_auc(const LabeledScores& d);

struct F1Accuracy {
    double f1 = 0.0;
    double accuracy = 0.0;
};

// Predicted positive iff score > threshold. F1 is 0 when there are no true positives.
F1Accuracy f1_accuracy(const LabeledScores& d, double threshold);

// 1 - SS_res / SS_tot. Throws UndefinedMetricError for constant `actual` or fewer than two points.
double r2(std::span<const double> predicted, std::span<const double> actual);

}  // namespace holmes
