#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "holmes/rng.hpp"
#include "holmes/selector.hpp"
#include "holmes/zoo.hpp"

namespace holmes {

// sqrt(2) * Phi^{-1}(auc): class-mean separation giving the requested binormal ROC-AUC.
double binormal_separation(double auc);

// Synthetic validation set: labels plus one score column per zoo model.
// Scores are stored row-major (sample-major) as calibrated logits, see synthesize_cohort.
class Cohort {
public:
    Cohort(std::vector<std::uint8_t> labels, std::vector<double> scores, std::size_t n_models, std::uint64_t seed);

    std::size_t n_samples() const { return labels_.size(); }
    std::size_t n_models() const { return n_models_; }
    std::uint64_t seed() const { return seed_; }
    std::span<const std::uint8_t> labels() const { return labels_; }
    double score(std::size_t sample, std::size_t model) const { return scores_[sample * n_models_ + model]; }
    std::span<const double> row(std::size_t sample) const {
        return {scores_.data() + sample * n_models_, n_models_};
    }

    // Copy with the given column replaced (test helper for invariants).
    Cohort with_column(std::size_t model, std::span<const double> values) const;

private:
    std::vector<std::uint8_t> labels_;
    std::vector<double> scores_;
    std::size_t n_models_;
    std::uint64_t seed_;
};

// Binormal score model. For model j with separation mu_j = binormal_separation(target_auc_j):
//   latent_ij = mu_j * y_i + sqrt(rho) * z_i + sqrt(1 - rho) * e_ij,  z, e ~ N(0, 1)
// so negatives are standard normal and positives have mean mu_j; z is the shared per-sample factor.
// The stored score is latent_ij - mu_j / 2, which centers the two class means around zero so the
// logistic map puts the 0.5 threshold midway between them (rank metrics are unaffected).
Cohort synthesize_cohort(const ModelZoo& zoo, std::size_t n_pos, std::size_t n_neg, double correlation,
                         std::uint64_t seed);

// One sample's row of stored scores under the model above.
class BinormalScorer {
public:
    BinormalScorer(const ModelZoo& zoo, double correlation);
    void draw(bool positive, Rng& rng, std::span<double> out) const;
    std::size_t n_models() const { return mu_.size(); }

private:
    std::vector<double> mu_;
    double shared_w_;
    double own_w_;
};

// Per-sample mean of the selected columns.
std::vector<double> ensemble_scores(const Cohort& cohort, const Selector& b);

struct AccuracyReport {
    double roc_auc = 0.0;
    double pr_auc = 0.0;
    double f1 = 0.0;
    double accuracy = 0.0;

    friend bool operator==(const AccuracyReport&, const AccuracyReport&) = default;
};

inline constexpr double kDefaultThreshold = 0.5;

// f_a: bagged ensemble scores, all four metrics (thresholded ones on logistic-mapped scores).
AccuracyReport accuracy_profile(const Cohort& cohort, const Selector& b);
// Ranking metric only; the composer's objective uses this.
double ensemble_roc_auc(const Cohort& cohort, const Selector& b);

void write_cohort_csv(const Cohort& cohort, const std::filesystem::path& path);

}  // namespace holmes
