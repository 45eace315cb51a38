#include "holmes/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "holmes/errors.hpp"
#include "holmes/rng.hpp"

namespace holmes {

namespace {

struct TreeBuilder {
    std::span<const double> rows;
    std::size_t n_features;
    std::span<const double> targets;
    int min_leaf;
    std::size_t mtry;
    Rng& rng;
    RegressionForest::Tree nodes;

    double x(std::size_t sample, std::size_t feature) const { return rows[sample * n_features + feature]; }

    struct Split {
        int feature = -1;
        double threshold = 0.0;
        double score = -1.0;  // variance reduction proxy: sum_L^2/n_L + sum_R^2/n_R
    };

    Split best_split_on(std::span<const std::uint32_t> samples, std::size_t f) const {
        std::vector<std::pair<double, double>> vals;
        vals.reserve(samples.size());
        for (auto s : samples) vals.emplace_back(x(s, f), targets[s]);
        std::sort(vals.begin(), vals.end());
        Split best;
        if (vals.front().first == vals.back().first) return best;
        double total = 0.0;
        for (auto& v : vals) total += v.second;
        double left_sum = 0.0;
        const std::size_t n = vals.size();
        for (std::size_t i = 0; i + 1 < n; ++i) {
            left_sum += vals[i].second;
            if (vals[i].first == vals[i + 1].first) continue;
            std::size_t nl = i + 1, nr = n - nl;
            if (nl < static_cast<std::size_t>(min_leaf) || nr < static_cast<std::size_t>(min_leaf)) continue;
            double right_sum = total - left_sum;
            double score = left_sum * left_sum / nl + right_sum * right_sum / nr;
            if (score > best.score) {
                best.feature = static_cast<int>(f);
                best.threshold = 0.5 * (vals[i].first + vals[i + 1].first);
                best.score = score;
            }
        }
        return best;
    }

    int build(std::vector<std::uint32_t>& samples) {
        int id = static_cast<int>(nodes.size());
        nodes.emplace_back();
        double sum = 0.0;
        for (auto s : samples) sum += targets[s];
        nodes[id].value = sum / static_cast<double>(samples.size());

        bool pure = std::all_of(samples.begin(), samples.end(),
                                [&](std::uint32_t s) { return targets[s] == targets[samples.front()]; });
        if (pure || samples.size() < 2 * static_cast<std::size_t>(min_leaf)) return id;

        // Draw features without replacement; keep drawing past mtry until a usable split shows up.
        std::vector<std::size_t> features(n_features);
        std::iota(features.begin(), features.end(), std::size_t{0});
        Split best;
        std::size_t informative = 0;
        for (std::size_t k = 0; k < n_features; ++k) {
            std::size_t pick = k + uniform_index(rng, n_features - k);
            std::swap(features[k], features[pick]);
            Split s = best_split_on(samples, features[k]);
            if (s.feature < 0) continue;
            ++informative;
            if (s.score > best.score) best = s;
            if (informative >= mtry) break;
        }
        if (best.feature < 0) return id;

        std::vector<std::uint32_t> left, right;
        for (auto s : samples) (x(s, best.feature) <= best.threshold ? left : right).push_back(s);
        samples.clear();
        samples.shrink_to_fit();
        nodes[id].feature = best.feature;
        nodes[id].threshold = best.threshold;
        int l = build(left);
        int r = build(right);
        nodes[id].left = l;
        nodes[id].right = r;
        return id;
    }
};

}  // namespace

RegressionForest RegressionForest::fit(std::span<const double> rows, std::size_t n_features,
                                       std::span<const double> targets, const ForestOptions& opts) {
    if (targets.empty()) throw InvalidArgument("RegressionForest::fit: no training data");
    if (n_features == 0 || rows.size() != targets.size() * n_features)
        throw InvalidArgument("RegressionForest::fit: feature matrix shape mismatch");
    if (opts.n_trees < 1 || opts.min_leaf < 1) throw InvalidArgument("RegressionForest::fit: bad options");
    for (double t : targets)
        if (!std::isfinite(t)) throw InvalidArgument("RegressionForest::fit: targets must be finite");

    RegressionForest forest;
    forest.n_features_ = n_features;
    const std::size_t mtry =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n_features)))));
    const std::size_t n = targets.size();
    for (int t = 0; t < opts.n_trees; ++t) {
        Rng rng(derive_seed(opts.seed, "forest.tree", static_cast<std::uint64_t>(t)));
        std::vector<std::uint32_t> samples(n);
        if (opts.bootstrap) {
            for (auto& s : samples) s = static_cast<std::uint32_t>(uniform_index(rng, n));
        } else {
            std::iota(samples.begin(), samples.end(), 0u);
        }
        TreeBuilder b{rows, n_features, targets, opts.min_leaf, mtry, rng, {}};
        b.build(samples);
        forest.trees_.push_back(std::move(b.nodes));
    }
    return forest;
}

double RegressionForest::predict(std::span<const double> x) const {
    if (x.size() != n_features_) throw InvalidArgument("RegressionForest::predict: feature length mismatch");
    double sum = 0.0;
    for (const auto& tree : trees_) {
        int node = 0;
        while (tree[node].feature >= 0)
            node = x[tree[node].feature] <= tree[node].threshold ? tree[node].left : tree[node].right;
        sum += tree[node].value;
    }
    return sum / static_cast<double>(trees_.size());
}

std::vector<double> selector_features(const Selector& b, std::span<const double> macs) {
    std::vector<double> out(b.bits().begin(), b.bits().end());
    if (!macs.empty()) {
        require_length(b, macs.size(), "selector_features");
        double total = 0.0;
        for (std::size_t i = 0; i < b.size(); ++i)
            if (b[i]) total += macs[i];
        out.push_back(static_cast<double>(b.popcount()));
        out.push_back(total);
    }
    return out;
}

SelectorSurrogate SelectorSurrogate::fit(std::span<const std::pair<Selector, double>> data, const ForestOptions& opts,
                                         std::vector<double> macs) {
    if (data.empty()) throw InvalidArgument("SelectorSurrogate::fit: no training data");
    SelectorSurrogate s;
    s.length_ = data.front().first.size();
    s.macs_ = std::move(macs);
    std::vector<double> rows, targets;
    std::size_t width = 0;
    for (const auto& [b, y] : data) {
        if (b.size() != s.length_) throw InvalidArgument("SelectorSurrogate::fit: inconsistent selector lengths");
        auto f = selector_features(b, s.macs_);
        width = f.size();
        rows.insert(rows.end(), f.begin(), f.end());
        targets.push_back(y);
    }
    s.forest_ = RegressionForest::fit(rows, width, targets, opts);
    return s;
}

double SelectorSurrogate::predict(const Selector& b) const {
    if (b.size() != length_) throw InvalidArgument("SelectorSurrogate::predict: selector length mismatch");
    return forest_.predict(selector_features(b, macs_));
}

}  // namespace holmes
