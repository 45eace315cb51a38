#include "holmes/metrics.hpp"

#include <algorithm>
#include <cstring>
#include <numeric>
#include <utility>

#include "holmes/errors.hpp"

namespace holmes {

LabeledScores::LabeledScores(std::span<const std::uint8_t> l, std::span<const double> s) : labels(l), scores(s) {
    if (labels.size() != scores.size()) throw InvalidArgument("LabeledScores: labels and scores differ in length");
    if (labels.empty()) throw InvalidArgument("LabeledScores: at least one sample required");
}

namespace {

// Order-preserving map from a double to an unsigned key (-0.0 and +0.0 coincide).
std::uint64_t ascending_key(double v) {
    if (v == 0.0) v = 0.0;
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    return (bits >> 63) ? ~bits : bits | (std::uint64_t{1} << 63);
}

// Equal keys <=> equal scores, so tie groups can be walked on keys.
struct Scored {
    std::uint64_t key;
    bool positive;
};

// Samples sorted by descending score. LSD radix sort (11-bit digits) on the inverted key;
// profiling sorts tens of thousands of scores per call.
std::vector<Scored> sorted_desc(const LabeledScores& d) {
    constexpr int kBits = 11;
    constexpr std::size_t kBuckets = std::size_t{1} << kBits;
    constexpr int kPasses = (64 + kBits - 1) / kBits;
    const std::size_t n = d.scores.size();
    std::vector<Scored> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) a[i] = {~ascending_key(d.scores[i]), d.labels[i] != 0};
    if (n < 512) {
        std::sort(a.begin(), a.end(), [](const Scored& x, const Scored& y) { return x.key < y.key; });
        return a;
    }
    std::vector<std::size_t> count(kPasses * kBuckets, 0);
    for (const auto& s : a)
        for (int p = 0; p < kPasses; ++p) ++count[p * kBuckets + ((s.key >> (p * kBits)) & (kBuckets - 1))];
    for (int p = 0; p < kPasses; ++p) {
        std::size_t* c = &count[p * kBuckets];
        if (c[(a[0].key >> (p * kBits)) & (kBuckets - 1)] == n) continue;  // digit constant across samples
        std::size_t sum = 0;
        for (std::size_t k = 0; k < kBuckets; ++k) sum += std::exchange(c[k], sum);
        for (const auto& s : a) b[c[(s.key >> (p * kBits)) & (kBuckets - 1)]++] = s;
        a.swap(b);
    }
    return a;
}

}  // namespace

double roc_auc(const LabeledScores& d) {
    std::size_t n_pos = 0;
    for (auto l : d.labels) n_pos += l ? 1 : 0;
    std::size_t n_neg = d.labels.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) throw UndefinedMetricError("roc_auc: both classes must be present");

    // Walk tie groups from the top; each positive beats every negative ranked strictly below it.
    auto v = sorted_desc(d);
    double wins = 0.0;
    std::size_t neg_above = 0;
    for (std::size_t i = 0; i < v.size();) {
        std::size_t j = i;
        std::size_t pos_g = 0, neg_g = 0;
        while (j < v.size() && v[j].key == v[i].key) {
            (v[j].positive ? pos_g : neg_g) += 1;
            ++j;
        }
        std::size_t neg_below = n_neg - neg_above - neg_g;
        wins += static_cast<double>(pos_g) * (static_cast<double>(neg_below) + 0.5 * static_cast<double>(neg_g));
        neg_above += neg_g;
        i = j;
    }
    return wins / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double pr_auc(const LabeledScores& d) {
    std::size_t n_pos = 0;
    for (auto l : d.labels) n_pos += l ? 1 : 0;
    if (n_pos == 0) throw UndefinedMetricError("pr_auc: no positive samples");

    auto v = sorted_desc(d);
    double ap = 0.0;
    std::size_t tp = 0, seen = 0;
    for (std::size_t i = 0; i < v.size();) {
        std::size_t j = i;
        std::size_t tp_g = 0;
        while (j < v.size() && v[j].key == v[i].key) {
            tp_g += v[j].positive ? 1 : 0;
            ++j;
        }
        seen += j - i;
        tp += tp_g;
        if (tp_g > 0) {
            double precision = static_cast<double>(tp) / static_cast<double>(seen);
            ap += (static_cast<double>(tp_g) / static_cast<double>(n_pos)) * precision;
        }
        i = j;
    }
    return ap;
}

F1Accuracy f1_accuracy(const LabeledScores& d, double threshold) {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    for (std::size_t i = 0; i < d.labels.size(); ++i) {
        bool pred = d.scores[i] > threshold;
        bool actual = d.labels[i] != 0;
        if (pred && actual) ++tp;
        else if (pred) ++fp;
        else if (actual) ++fn;
        else ++tn;
    }
    F1Accuracy out;
    out.accuracy = static_cast<double>(tp + tn) / static_cast<double>(d.labels.size());
    if (tp > 0) out.f1 = 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
    return out;
}

double r2(std::span<const double> predicted, std::span<const double> actual) {
    if (predicted.size() != actual.size()) throw InvalidArgument("r2: length mismatch");
    if (actual.size() < 2) throw UndefinedMetricError("r2: need at least two points");
    double mean = std::accumulate(actual.begin(), actual.end(), 0.0) / static_cast<double>(actual.size());
    double ss_tot = 0.0, ss_res = 0.0;
    for (std::size_t i = 0; i < actual.size(); ++i) {
        ss_tot += (actual[i] - mean) * (actual[i] - mean);
        ss_res += (actual[i] - predicted[i]) * (actual[i] - predicted[i]);
    }
    if (ss_tot == 0.0) throw UndefinedMetricError("r2: actual values are constant");
    return 1.0 - ss_res / ss_tot;
}

}  // namespace holmes
