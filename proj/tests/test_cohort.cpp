#include <doctest.h>

#include <cmath>

#include "holmes/cohort.hpp"
#include "holmes/errors.hpp"
#include "holmes/metrics.hpp"

using namespace holmes;

namespace {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Inverse normal CDF by bisection.
double probit(double p) {
    double lo = -10, hi = 10;
    for (int i = 0; i < 200; ++i) {
        double mid = 0.5 * (lo + hi);
        (normal_cdf(mid) < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

ModelZoo zoo_with_aucs(const std::vector<double>& aucs) {
    std::vector<ModelProfile> ps;
    for (std::size_t i = 0; i < aucs.size(); ++i)
        ps.push_back({"m" + std::to_string(i), 2, 8, 1e5, 1.0, "ECG-I", 7500, aucs[i]});
    return ModelZoo(ps);
}

Cohort tiny_cohort() {
    // 2 samples x 3 models
    return Cohort({0, 1}, {0.3, 0.6, 0.9, 0.8, 0.6, 0.1}, 3, 0);
}

}  // namespace

TEST_CASE("binormal separation") {
    CHECK(binormal_separation(0.5) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(binormal_separation(0.9) == doctest::Approx(std::sqrt(2.0) * probit(0.9)).epsilon(1e-10));
    CHECK(binormal_separation(0.9) == doctest::Approx(1.8124).epsilon(1e-4));
    CHECK_THROWS_AS(binormal_separation(1.0), InvalidArgument);
    CHECK_THROWS_AS(binormal_separation(0.0), InvalidArgument);
}

TEST_CASE("single column hits its target auc") {
    auto zoo = zoo_with_aucs({0.95});
    auto c = synthesize_cohort(zoo, 50000, 50000, 0.0, 17);
    CHECK(c.n_samples() == 100000);
    CHECK(ensemble_roc_auc(c, Selector::all(1)) == doctest::Approx(0.95).epsilon(0.01 / 0.95));
}

TEST_CASE("every column tracks its target under correlation") {
    auto zoo = zoo_with_aucs({0.6, 0.7, 0.8, 0.9});
    auto c = synthesize_cohort(zoo, 20000, 20000, 0.5, 3);
    for (std::size_t j = 0; j < 4; ++j)
        CHECK(std::abs(ensemble_roc_auc(c, Selector::single(4, j)) - zoo[j].target_auc) < 0.01);
}

TEST_CASE("ensemble scores are per-sample means") {
    auto c = tiny_cohort();
    auto two = ensemble_scores(c, Selector::from_string("110"));
    CHECK(two[1] == doctest::Approx(0.7));
    auto all = ensemble_scores(c, Selector::all(3));
    CHECK(all[0] == doctest::Approx(0.6));
    auto one = ensemble_scores(c, Selector::single(3, 2));
    CHECK(one[0] == 0.9);
    CHECK(one[1] == 0.1);
    CHECK_THROWS_AS(ensemble_scores(c, Selector(3)), EmptyEnsembleError);
    CHECK_THROWS_AS(ensemble_scores(c, Selector(4)), InvalidArgument);
}

TEST_CASE("accuracy profile") {
    auto c = Cohort({0, 0, 1, 1}, {-3, -2, 2, 3}, 1, 0);
    auto r = accuracy_profile(c, Selector::all(1));
    CHECK(r.roc_auc == 1.0);
    CHECK(r.pr_auc == 1.0);
    CHECK(r.f1 == 1.0);
    CHECK(r.accuracy == 1.0);

    auto zoo = zoo_with_aucs({0.7, 0.8, 0.9});
    auto big = synthesize_cohort(zoo, 2000, 2000, 0.3, 5);
    auto b = Selector::from_string("101");
    CHECK(accuracy_profile(big, b) == accuracy_profile(big, b));
}

TEST_CASE("synthesis is deterministic per seed") {
    auto zoo = zoo_with_aucs({0.7, 0.8});
    auto a = synthesize_cohort(zoo, 100, 100, 0.3, 1);
    auto b = synthesize_cohort(zoo, 100, 100, 0.3, 1);
    auto c = synthesize_cohort(zoo, 100, 100, 0.3, 2);
    CHECK(std::equal(a.row(5).begin(), a.row(5).end(), b.row(5).begin()));
    CHECK(!std::equal(a.row(5).begin(), a.row(5).end(), c.row(5).begin()));
    CHECK(std::count(a.labels().begin(), a.labels().end(), 1) == 100);
}

TEST_CASE("disjoint union usually beats both halves without correlation") {
    std::vector<double> aucs;
    for (int i = 0; i < 10; ++i) aucs.push_back(0.7 + 0.02 * i);
    auto zoo = zoo_with_aucs(aucs);
    int wins = 0;
    for (int t = 0; t < 100; ++t) {
        Rng rng(derive_seed(99, "trial", t));
        Selector a(10), b(10);
        for (std::size_t i = 0; i < 10; ++i) (uniform01(rng) < 0.5 ? a : b).set(i);
        if (a.empty_ensemble() || b.empty_ensemble()) {
            a = Selector::from_string("1010101010");
            b = Selector::from_string("0101010101");
        }
        Selector u(10);
        for (std::size_t i = 0; i < 10; ++i) u.set(i, a[i] || b[i]);
        auto c = synthesize_cohort(zoo, 2000, 2000, 0.0, derive_seed(99, "cohort", t));
        double best = std::max(ensemble_roc_auc(c, a), ensemble_roc_auc(c, b));
        wins += ensemble_roc_auc(c, u) >= best;
    }
    CHECK(wins >= 95);
}

TEST_CASE("cohort validates shape") {
    CHECK_THROWS_AS(Cohort({0, 1}, {0.1}, 1, 0), InvalidArgument);
    CHECK_THROWS_AS(Cohort({1, 1}, {0.1, 0.2}, 1, 0), InvalidArgument);
    auto zoo = zoo_with_aucs({0.7});
    CHECK_THROWS_AS(synthesize_cohort(zoo, 10, 10, 1.0, 0), InvalidArgument);
}
