#include "holmes/cohort.hpp"

#include <boost/math/special_functions/erf.hpp>
#include <cmath>
#include <fstream>

#include "holmes/errors.hpp"
#include "holmes/metrics.hpp"
#include "holmes/rng.hpp"

namespace holmes {

double binormal_separation(double auc) {
    if (!(auc > 0.0 && auc < 1.0)) throw InvalidArgument("binormal_separation: auc must lie in (0, 1)");
    // Phi^{-1}(p) = -sqrt(2) erfc^{-1}(2p)
    double z = -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * auc);
    return std::sqrt(2.0) * z;
}

Cohort::Cohort(std::vector<std::uint8_t> labels, std::vector<double> scores, std::size_t n_models,
               std::uint64_t seed)
    : labels_(std::move(labels)), scores_(std::move(scores)), n_models_(n_models), seed_(seed) {
    if (scores_.size() != labels_.size() * n_models_) throw InvalidArgument("Cohort: score matrix shape mismatch");
    bool has0 = false, has1 = false;
    for (auto l : labels_) (l ? has1 : has0) = true;
    if (!has0 || !has1) throw InvalidArgument("Cohort: both classes must be present");
    for (double s : scores_)
        if (!std::isfinite(s)) throw InvalidArgument("Cohort: scores must be finite");
}

Cohort Cohort::with_column(std::size_t model, std::span<const double> values) const {
    if (values.size() != n_samples() || model >= n_models_) throw InvalidArgument("with_column: bad shape");
    auto scores = scores_;
    for (std::size_t i = 0; i < n_samples(); ++i) scores[i * n_models_ + model] = values[i];
    return Cohort(labels_, std::move(scores), n_models_, seed_);
}

BinormalScorer::BinormalScorer(const ModelZoo& zoo, double correlation)
    : shared_w_(std::sqrt(correlation)), own_w_(std::sqrt(1.0 - correlation)) {
    if (!(correlation >= 0.0 && correlation < 1.0))
        throw InvalidArgument("binormal scores: correlation must lie in [0, 1)");
    if (zoo.size() == 0) throw InvalidArgument("binormal scores: empty zoo");
    mu_.resize(zoo.size());
    for (std::size_t j = 0; j < zoo.size(); ++j) mu_[j] = binormal_separation(zoo[j].target_auc);
}

void BinormalScorer::draw(bool positive, Rng& rng, std::span<double> out) const {
    if (out.size() != mu_.size()) throw InvalidArgument("binormal scores: output width mismatch");
    std::normal_distribution<double> normal(0.0, 1.0);
    const double y = positive ? 1.0 : 0.0;
    const double z = normal(rng);
    for (std::size_t j = 0; j < mu_.size(); ++j) out[j] = mu_[j] * y + shared_w_ * z + own_w_ * normal(rng) - 0.5 * mu_[j];
}

Cohort synthesize_cohort(const ModelZoo& zoo, std::size_t n_pos, std::size_t n_neg, double correlation,
                         std::uint64_t seed) {
    if (n_pos < 1 || n_neg < 1) throw InvalidArgument("synthesize_cohort: need at least one sample per class");
    BinormalScorer scorer(zoo, correlation);
    const std::size_t n = zoo.size();
    const std::size_t total = n_pos + n_neg;
    std::vector<std::uint8_t> labels(total);
    std::vector<double> scores(total * n);
    Rng rng(derive_seed(seed, "cohort.scores"));
    for (std::size_t i = 0; i < total; ++i) {
        labels[i] = i < n_pos ? 1 : 0;
        scorer.draw(labels[i] != 0, rng, std::span<double>(scores.data() + i * n, n));
    }
    return Cohort(std::move(labels), std::move(scores), n, seed);
}
std::vector<double> ensemble_scores(const Cohort& cohort, const Selector& b) {
    require_length(b, cohort.n_models(), "ensemble_scores");
    auto idx = b.indices();
    if (idx.empty()) throw EmptyEnsembleError();
    const double inv = 1.0 / static_cast<double>(idx.size());
    std::vector<double> out(cohort.n_samples());
    for (std::size_t i = 0; i < out.size(); ++i) {
        auto row = cohort.row(i);
        double s = 0.0;
        for (auto j : idx) s += row[j];
        out[i] = s * inv;
    }
    return out;
}

double ensemble_roc_auc(const Cohort& cohort, const Selector& b) {
    auto s = ensemble_scores(cohort, b);
    return roc_auc(LabeledScores(cohort.labels(), s));
}

AccuracyReport accuracy_profile(const Cohort& cohort, const Selector& b) {
    auto s = ensemble_scores(cohort, b);
    AccuracyReport r;
    LabeledScores d(cohort.labels(), s);
    r.roc_auc = roc_auc(d);
    r.pr_auc = pr_auc(d);
    std::vector<double> prob(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) prob[i] = 1.0 / (1.0 + std::exp(-s[i]));
    auto fa = f1_accuracy(LabeledScores(cohort.labels(), prob), kDefaultThreshold);
    r.f1 = fa.f1;
    r.accuracy = fa.accuracy;
    return r;
}

void write_cohort_csv(const Cohort& cohort, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidArgument("write_cohort_csv: cannot open '" + path.string() + "'");
    out << "label";
    for (std::size_t j = 0; j < cohort.n_models(); ++j) out << ",score_" << j;
    out << "\n";
    out.precision(17);
    for (std::size_t i = 0; i < cohort.n_samples(); ++i) {
        out << int(cohort.labels()[i]);
        for (double v : cohort.row(i)) out << "," << v;
        out << "\n";
    }
}

}  // namespace holmes
