#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "holmes/selector.hpp"

namespace holmes {

struct ForestOptions {
    int n_trees = 64;
    int min_leaf = 2;
    bool bootstrap = true;
    std::uint64_t seed = 0;
};

// Random-forest regressor over dense real feature rows. Leaves hold the mean of their
// training targets, so predictions never leave [min target, max target].
class RegressionForest {
public:
    struct Node {
        int feature = -1;        // -1 marks a leaf
        double threshold = 0.0;  // go left iff x[feature] <= threshold
        int left = -1;
        int right = -1;
        double value = 0.0;
    };
    using Tree = std::vector<Node>;

    // rows: n_samples x n_features (row-major). Throws InvalidArgument on shape problems.
    static RegressionForest fit(std::span<const double> rows, std::size_t n_features, std::span<const double> targets,
                                const ForestOptions& opts);

    double predict(std::span<const double> x) const;
    std::size_t n_features() const { return n_features_; }
    const std::vector<Tree>& trees() const { return trees_; }

private:
    std::size_t n_features_ = 0;
    std::vector<Tree> trees_;
};

// Maps a selector to forest features: its raw bits, optionally followed by
// (popcount, sum of selected MACs) when macs is non-empty.
std::vector<double> selector_features(const Selector& b, std::span<const double> macs = {});

// Surrogate over selectors: the form the composer fits on profiled sets.
class SelectorSurrogate {
public:
    // macs: per-model MACs to append as extra features, or empty for bits only.
    static SelectorSurrogate fit(std::span<const std::pair<Selector, double>> data, const ForestOptions& opts,
                                 std::vector<double> macs = {});

    double predict(const Selector& b) const;
    std::size_t selector_length() const { return length_; }

private:
    RegressionForest forest_;
    std::vector<double> macs_;
    std::size_t length_ = 0;
};

}  // namespace holmes
