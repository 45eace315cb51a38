#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include <json.hpp>

#include "holmes/cohort.hpp"
#include "holmes/composer.hpp"
#include "holmes/errors.hpp"
#include "holmes/profiler.hpp"

using namespace holmes;

namespace {

// Profiler backed by a hand-written table.
class TableProfiler final : public EnsembleProfiler {
public:
    TableProfiler(std::vector<double> single_auc, std::map<std::string, std::pair<double, double>> table)
        : table_(std::move(table)) {
        std::vector<ModelProfile> ps;
        for (std::size_t i = 0; i < single_auc.size(); ++i)
            ps.push_back({"m" + std::to_string(i), 2, 8, 1e5, 1.0, "ECG-I", 7500, single_auc[i]});
        zoo_ = ModelZoo(ps);
    }
    const ModelZoo& zoo() const override { return zoo_; }
    ProfileRecord profile(const Selector& b) const override {
        const auto& [a, l] = table_.at(b.to_string());
        return {b, a, l};
    }

private:
    ModelZoo zoo_;
    std::map<std::string, std::pair<double, double>> table_;
};

// Hand-built 3-model instance, (accuracy, latency) per selector.
TableProfiler three_models() {
    return TableProfiler({0.80, 0.75, 0.85}, {{"100", {0.80, 0.05}},
                                              {"010", {0.75, 0.04}},
                                              {"001", {0.85, 0.15}},
                                              {"110", {0.84, 0.09}},
                                              {"101", {0.88, 0.20}},
                                              {"011", {0.87, 0.19}},
                                              {"111", {0.90, 0.24}}});
}

struct SmallInstance {
    ModelZoo zoo;
    Cohort cohort;
    SimulatedProfiler prof;
    explicit SmallInstance(std::uint64_t seed)
        : zoo(generate_zoo(1, {8, 16, 32, 64, 128}, {4, 16}, seed)),
          cohort(synthesize_cohort(zoo, 2000, 2000, 0.3, seed)),
          prof(zoo, cohort, ExecutorModel{}, SystemConfig{}, seed) {}
};

SearchParams hard() { return SearchParams{}; }

SearchParams soft(double lambda) {
    SearchParams p;
    p.constraint_mode = ConstraintMode::soft;
    p.lambda = lambda;
    return p;
}

}  // namespace

TEST_CASE("delta") {
    CHECK(delta(-0.01, ConstraintMode::hard, 1.0) == -kInfinity);
    CHECK(delta(0.0, ConstraintMode::hard, 1.0) == 0.0);
    CHECK(delta(0.3, ConstraintMode::hard, 1.0) == 0.0);
    CHECK(delta(-0.05, ConstraintMode::soft, 0.1) == doctest::Approx(-0.005));
    CHECK(delta(0.05, ConstraintMode::soft, 0.1) == doctest::Approx(0.005));
}

TEST_CASE("objective") {
    Selector b = Selector::from_string("1");
    CHECK(objective({b, 0.93, 0.18}, 0.2, hard()) == 0.93);
    CHECK(objective({b, 0.99, 0.25}, 0.2, hard()) == -kInfinity);
    CHECK(objective({b, 0.93, 0.25}, 0.2, soft(0.1)) == doctest::Approx(0.925));
    CHECK(objective({b, 0.93, kInfinity}, 0.2, hard()) == -kInfinity);
    CHECK(dual_objective({b, 0.80, 0.1}, 0.85, hard()) == kInfinity);
    CHECK(dual_objective({b, 0.90, 0.1}, 0.85, hard()) == 0.1);
}

TEST_CASE("recombine") {
    auto a = Selector::from_string("1111"), z = Selector::from_string("0000");
    CHECK(recombine(a, z, 2).to_string() == "1100");
    CHECK(recombine(a, z, 4) == a);
    CHECK(recombine(a, a, 1) == a);
    CHECK(recombine(a, z, 1).size() == 4);
    CHECK_THROWS_AS(recombine(a, z, 0), InvalidArgument);
    CHECK_THROWS_AS(recombine(a, z, 5), InvalidArgument);
}

TEST_CASE("mutation") {
    std::size_t one = 1;
    CHECK(flip_bits(Selector::from_string("010"), std::span(&one, 1)).to_string() == "000");
    auto b = Selector::from_string("0110100101");
    CHECK(mutate(b, 0, 42) == b);
    for (std::uint64_t s = 0; s < 1000; ++s) {
        CHECK(manhattan(mutate(b, 3, s), b) <= 3);
        CHECK(mutate(b, 3, s).size() == b.size());
    }
}

TEST_CASE("explore on a 2-bit space") {
    std::vector<Selector> B{Selector::from_string("00"), Selector::from_string("11")};
    auto out = explore(B, 2, 1, 0.8, 0.5, 7);
    std::set<std::string> got;
    for (const auto& b : out) got.insert(b.to_string());
    CHECK(got == std::set<std::string>{"01", "10"});
    CHECK_THROWS_AS(explore(B, 3, 1, 0.8, 0.5, 7), ExhaustionError);
}

TEST_CASE("explore branch forcing") {
    Rng init(3);
    std::vector<Selector> B;
    for (int i = 0; i < 5; ++i) {
        Selector b(20);
        for (std::size_t j = 0; j < 20; ++j) b.set(j, uniform01(init) < 0.5);
        B.push_back(b);
    }
    ExploreStats st;
    ExploreOptions eo;
    eo.stats = &st;
    Rng rng(1);
    auto muts = explore(B, 50, 2, 1.0, 1.0, rng, eo);
    CHECK(st.random_draws == 0);
    CHECK(st.recombination_draws == 0);
    for (const auto& c : muts) {
        std::size_t d = 99;
        for (const auto& p : B) d = std::min(d, manhattan(c, p));
        CHECK(d <= 2);
    }

    st = {};
    explore(B, 50, 2, 0.0, 0.5, rng, eo);
    CHECK(st.mutation_draws == 0);
    CHECK(st.recombination_draws == 0);
    CHECK(st.random_draws >= 50);
}

TEST_CASE("explore never returns duplicates or members") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        Rng init(seed);
        std::vector<Selector> B;
        for (int i = 0; i < 8; ++i) {
            Selector b(8);
            for (std::size_t j = 0; j < 8; ++j) b.set(j, uniform01(init) < 0.3);
            B.push_back(b);
        }
        std::unordered_set<Selector, SelectorHash> excl{Selector::from_string("11111111")};
        ExploreOptions eo;
        eo.exclude = &excl;
        Rng rng(seed);
        auto out = explore(B, 100, 2, 0.8, 0.5, rng, eo);
        std::unordered_set<Selector, SelectorHash> seen;
        for (const auto& c : out) {
            CHECK(seen.insert(c).second);
            CHECK(!c.empty_ensemble());
            CHECK(std::find(B.begin(), B.end(), c) == B.end());
            CHECK(!excl.count(c));
        }
    }
}

TEST_CASE("brute force on the hand-built table") {
    auto prof = three_models();
    SUBCASE("L = 0.2 keeps 101") {
        auto r = brute_force_oracle(prof, 0.2, hard());
        CHECK(r.best.to_string() == "101");
        CHECK(r.best_objective == 0.88);
        CHECK(r.feasible);
        CHECK(r.profiler_calls == 7);
    }
    SUBCASE("L = 0.1 keeps 110") {
        auto r = brute_force_oracle(prof, 0.1, hard());
        CHECK(r.best.to_string() == "110");
    }
    SUBCASE("nothing fits") {
        auto r = brute_force_oracle(prof, 0.01, hard());
        CHECK(!r.feasible);
    }
    SUBCASE("soft penalties") {
        // soft also rewards slack: 110 scores 0.84 + 0.5 * 0.11
        CHECK(brute_force_oracle(prof, 0.2, soft(0.5)).best.to_string() == "110");
        CHECK(brute_force_oracle(prof, 0.2, soft(0.1)).best.to_string() == "111");
    }
    SUBCASE("dual form") {
        CHECK(brute_force_oracle(prof, Goal::accuracy_floor(0.86), hard()).best.to_string() == "011");
        CHECK(brute_force_oracle(prof, Goal::accuracy_floor(0.0), hard()).best.to_string() == "010");
    }
}

TEST_CASE("brute force guard and single model") {
    auto zoo = generate_zoo(3, {8, 16, 32, 64, 128}, {2, 4, 8, 16}, 1);
    auto cohort = synthesize_cohort(zoo, 50, 50, 0.3, 1);
    SimulatedProfiler prof(zoo, cohort, {}, {}, 1);
    CHECK_THROWS_AS(brute_force_oracle(prof, 0.2, hard()), GuardError);

    TableProfiler one({0.8}, {{"1", {0.8, 0.1}}});
    CHECK(brute_force_oracle(one, 0.2, hard()).best.to_string() == "1");
    CHECK(!brute_force_oracle(one, 0.05, hard()).feasible);
}

TEST_CASE("greedy baselines on the table") {
    auto prof = three_models();
    // every single fits 0.2 but all three do not
    auto lf = baseline_lf(prof, 0.2, hard());
    CHECK(lf.best.to_string() == "110");
    CHECK(lf.best.popcount() > 1);
    CHECK(lf.best.popcount() < 3);
    // AF order by target: 2, 0, 1 -> 001, 101 (0.20 fits), 111 (rolled back)
    auto af = baseline_af(prof, 0.2, hard());
    CHECK(af.best.to_string() == "101");
    CHECK(af.profiler_calls == 3);

    TableProfiler tie({0.8, 0.8, 0.7}, {{"100", {0.8, 0.1}}, {"010", {0.8, 0.1}}, {"110", {0.85, 0.25}}});
    CHECK(baseline_af(tie, 0.2, hard()).best.to_string() == "100");

    auto a = baseline_rd(prof, 0.2, hard(), 5);
    auto b = baseline_rd(prof, 0.2, hard(), 5);
    CHECK(a.best == b.best);
    CHECK(a.profiler_calls == b.profiler_calls);
}

TEST_CASE("oracle dominates every baseline") {
    for (std::uint64_t s = 1; s <= 3; ++s) {
        SmallInstance inst(s);
        auto p = hard();
        p.seed = s;
        double best = brute_force_oracle(inst.prof, 0.2, p).best_objective;
        for (const auto& r : {baseline_rd(inst.prof, 0.2, p, s), baseline_af(inst.prof, 0.2, p),
                              baseline_lf(inst.prof, 0.2, p), smbo_search(inst.prof, 0.2, p)})
            CHECK(r.best_objective <= best);
    }
}

TEST_CASE("npo") {
    SmallInstance inst(4);
    auto p = hard();
    auto lf = baseline_lf(inst.prof, 0.2, p);
    std::vector<Selector> seeds{lf.best};
    auto one = baseline_npo(inst.prof, 0.2, p, 1, 3, seeds, 9);
    CHECK(one.profiler_calls == 2);
    auto a = baseline_npo(inst.prof, 0.2, p, 30, 3, seeds, 9);
    auto b = baseline_npo(inst.prof, 0.2, p, 30, 3, seeds, 9);
    CHECK(a.best == b.best);
    CHECK(a.profiler_calls == 31);
    for (const auto& r : a.profiled)
        if (r.b != lf.best) CHECK(r.b.popcount() <= 3);
}

TEST_CASE("smbo with no iterations keeps the best seed") {
    SmallInstance inst(5);
    auto p = hard();
    p.n_iters = 0;
    p.n_warm = 3;
    std::vector<Selector> seeds{baseline_rd(inst.prof, 0.2, p, 1).best, baseline_af(inst.prof, 0.2, p).best,
                                baseline_lf(inst.prof, 0.2, p).best};
    auto r = smbo_search(inst.prof, 0.2, p, seeds);
    double best = -kInfinity;
    Selector arg;
    for (const auto& s : seeds) {
        double o = objective(inst.prof.profile(s), 0.2, p);
        if (o > best) best = o, arg = s;
    }
    CHECK(r.best == arg);
    CHECK(r.best_objective == best);
    CHECK(r.trajectory.size() == 1);
}

TEST_CASE("smbo accounting, trajectory and hard soundness") {
    SmallInstance inst(6);
    auto p = hard();
    p.seed = 6;
    std::vector<Selector> seeds{baseline_lf(inst.prof, 0.2, p).best};
    int fits = 0;
    SearchHooks hooks;
    hooks.on_fit = [&](const SurrogateSnapshot& s) {
        CHECK(s.iter == fits);
        ++fits;
    };
    auto r = smbo_search(inst.prof, 0.2, p, seeds, hooks);
    CHECK(fits == p.n_iters + 1);
    CHECK(r.profiler_calls <= p.budget());
    CHECK(static_cast<int>(r.profiled.size()) == r.profiler_calls);
    CHECK(r.trajectory.size() == static_cast<std::size_t>(p.n_iters + 1));
    for (std::size_t i = 1; i < r.trajectory.size(); ++i)
        CHECK(r.trajectory[i].best_objective >= r.trajectory[i - 1].best_objective);
    REQUIRE(r.feasible);
    CHECK(inst.prof.profile(r.best).latency_s <= 0.2);

    auto again = smbo_search(inst.prof, 0.2, p, seeds);
    CHECK(again.best == r.best);
    CHECK(trajectory_csv(again) == trajectory_csv(r));
}

TEST_CASE("smbo close to the oracle on small zoos") {
    int good = 0;
    for (std::uint64_t s = 10; s < 20; ++s) {
        SmallInstance inst(s);
        auto p = hard();
        p.seed = s;
        std::vector<Selector> seeds;
        for (auto&& r : {baseline_rd(inst.prof, 0.2, p, s), baseline_af(inst.prof, 0.2, p), baseline_lf(inst.prof, 0.2, p)})
            if (!r.best.empty_ensemble()) seeds.push_back(r.best);
        double opt = brute_force_oracle(inst.prof, 0.2, p).best_objective;
        good += smbo_search(inst.prof, 0.2, p, seeds).best_objective >= 0.98 * opt;
    }
    CHECK(good >= 9);
}

TEST_CASE("dual search") {
    SmallInstance inst(7);
    auto p = hard();
    auto r0 = dual_search(inst.prof, 0.0, p);
    double lowest = kInfinity;
    for (const auto& rec : r0.profiled) lowest = std::min(lowest, rec.latency_s);
    CHECK(inst.prof.profile(r0.best).latency_s == lowest);
    auto r = dual_search(inst.prof, 0.8, p);
    if (r.feasible) CHECK(inst.prof.profile(r.best).accuracy >= 0.8);
}

TEST_CASE("search json") {
    auto prof = three_models();
    auto r = brute_force_oracle(prof, 0.01, hard());
    auto j = nlohmann::json::parse(search_result_json(r, Goal::latency_budget(0.01), hard()));
    CHECK(j.contains("best"));
    CHECK(trajectory_csv(r).rfind("iter,best_acc,best_lat,best_obj\n", 0) == 0);
}
