#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "holmes/profiler.hpp"
#include "holmes/rng.hpp"
#include "holmes/selector.hpp"
#include "holmes/surrogate.hpp"

namespace holmes {

enum class ConstraintMode { hard, soft };

std::string to_string(ConstraintMode m);
ConstraintMode constraint_mode_from_string(const std::string& s);

struct SearchParams {
    double lambda = 1.0;  // soft penalty weight, and the ranking weight per second of violation
    int n_iters = 20;     // N
    int n_warm = 20;      // N0, including the baseline seed solutions
    int n_explore = 200;  // M
    int top_k = 5;        // K
    int mutation_degree = 2;  // S
    double p_genetic = 0.8;   // p
    double p_mutation = 0.5;  // q
    ConstraintMode constraint_mode = ConstraintMode::hard;
    std::uint64_t seed = 0;

    int surrogate_trees = 64;
    int surrogate_min_leaf = 2;
    bool surrogate_profile_features = false;  // append (popcount, sum of selected MACs)
    // Rank candidates by f^_a + lambda (L - f^_l) including the reward for slack. Off: only a
    // predicted violation is penalized, f^_a + lambda min(0, L - f^_l).
    bool rank_reward_slack = false;

    void validate() const;
    int budget() const { return n_warm + n_iters * top_k; }
};

// delta(x): hard -> -inf when x < 0 else 0; soft -> lambda * x.
double delta(double x, ConstraintMode mode, double lambda);

// f_a(b) + delta(L - f_l(b)).
double objective(const ProfileRecord& rec, double latency_budget_s, const SearchParams& params);

// f_l(b) - delta(f_a(b) - A): minimized by the dual search (+inf on a hard shortfall).
double dual_objective(const ProfileRecord& rec, double accuracy_floor, const SearchParams& params);

// Length-preserving one-point crossover: bits [0, cut) from a, [cut, n) from b. 1 <= cut <= n.
Selector recombine(const Selector& a, const Selector& b, std::size_t cut);

// Flips the listed indices in order (an index listed twice cancels out).
Selector flip_bits(const Selector& b, std::span<const std::size_t> indices);

// `degree` flips at uniform indices drawn with replacement.
Selector mutate(const Selector& b, int degree, Rng& rng);
Selector mutate(const Selector& b, int degree, std::uint64_t seed);

struct ExploreStats {
    std::size_t random_draws = 0;
    std::size_t recombination_draws = 0;
    std::size_t mutation_draws = 0;
    std::size_t rejected = 0;
};

struct ExploreOptions {
    const std::unordered_set<Selector, SelectorHash>* exclude = nullptr;  // treated like members of B
    ExploreStats* stats = nullptr;
    std::size_t max_attempts_per_candidate = 100000;
};

// Genetic exploration: returns M distinct non-empty selectors not in B.
// Throws ExhaustionError when fewer than M novel selectors exist (or cannot be reached).
std::vector<Selector> explore(std::span<const Selector> B, int M, int S, double p, double q, Rng& rng,
                              const ExploreOptions& opts = {});
std::vector<Selector> explore(std::span<const Selector> B, int M, int S, double p, double q, std::uint64_t seed);

struct TrajectoryPoint {
    int iter = 0;
    double best_accuracy = 0.0;
    double best_latency = 0.0;
    double best_objective = 0.0;
};

struct SearchResult {
    Selector best;                 // all-zero when nothing usable was found
    double best_objective = 0.0;   // maximized (primal) or minimized (dual) true objective
    bool feasible = false;         // best satisfies the hard constraint
    std::vector<TrajectoryPoint> trajectory;
    std::vector<ProfileRecord> profiled;
    int profiler_calls = 0;        // distinct selectors truly profiled by this search

    const ProfileRecord* best_record() const;
};

// What the search optimizes. Primal: maximize f_a s.t. f_l <= bound. Dual: minimize f_l s.t. f_a >= bound.
struct Goal {
    enum class Kind { max_accuracy, min_latency };
    Kind kind = Kind::max_accuracy;
    double bound = 0.2;

    static Goal latency_budget(double L) { return {Kind::max_accuracy, L}; }
    static Goal accuracy_floor(double A) { return {Kind::min_latency, A}; }

    // Larger is better; -inf for hard violations.
    double score(const ProfileRecord& rec, const SearchParams& p) const;
    // Reported objective (primal value, or dual latency objective).
    double reported(const ProfileRecord& rec, const SearchParams& p) const;
    bool satisfied(const ProfileRecord& rec) const;
};

struct SurrogateSnapshot {
    int iter = 0;  // completed SMBO rounds when fitted
    std::size_t train_size = 0;
    const SelectorSurrogate* accuracy = nullptr;
    const SelectorSurrogate* latency = nullptr;
};

struct SearchHooks {
    // Selectors the search must never explore or profile (held-out probes).
    const std::unordered_set<Selector, SelectorHash>* exclude = nullptr;
    // Called after every surrogate fit, including one extra fit after the final round.
    std::function<void(const SurrogateSnapshot&)> on_fit;
};

// SMBO: warm start (seed solutions plus random selectors up to N0), then N rounds of
// fit surrogates -> genetic explore M -> rank on the surrogates (see rank_reward_slack) -> profile top K.
// Returns the argmax of the true objective over everything profiled.
SearchResult smbo_search(const EnsembleProfiler& profiler, const Goal& goal, const SearchParams& params,
                         std::span<const Selector> seed_solutions = {}, const SearchHooks& hooks = {});

inline SearchResult smbo_search(const EnsembleProfiler& profiler, double latency_budget_s, const SearchParams& params,
                                std::span<const Selector> seed_solutions = {}, const SearchHooks& hooks = {}) {
    return smbo_search(profiler, Goal::latency_budget(latency_budget_s), params, seed_solutions, hooks);
}

SearchResult dual_search(const EnsembleProfiler& profiler, double accuracy_floor, const SearchParams& params,
                         std::span<const Selector> seed_solutions = {}, const SearchHooks& hooks = {});

// Greedy accretion baselines. The step that exceeds L is profiled (and counted) but rolled back.
SearchResult baseline_rd(const EnsembleProfiler& profiler, double latency_budget_s, const SearchParams& params,
                         std::uint64_t seed);
SearchResult baseline_af(const EnsembleProfiler& profiler, double latency_budget_s, const SearchParams& params);
SearchResult baseline_lf(const EnsembleProfiler& profiler, double latency_budget_s, const SearchParams& params);

// Random subsets of size <= max_subset_size, profiled until `budget` calls beyond the seeds.
SearchResult baseline_npo(const EnsembleProfiler& profiler, double latency_budget_s, const SearchParams& params,
                          int budget, std::size_t max_subset_size, std::span<const Selector> seed_solutions,
                          std::uint64_t seed);

inline constexpr std::size_t kBruteForceMaxModels = 20;

// Exhaustive search over all 2^n - 1 non-empty selectors. Throws GuardError above 20 models.
SearchResult brute_force_oracle(const EnsembleProfiler& profiler, const Goal& goal, const SearchParams& params);
inline SearchResult brute_force_oracle(const EnsembleProfiler& profiler, double latency_budget_s,
                                       const SearchParams& params) {
    return brute_force_oracle(profiler, Goal::latency_budget(latency_budget_s), params);
}

std::string search_result_json(const SearchResult& r, const Goal& goal, const SearchParams& params);
std::string trajectory_csv(const SearchResult& r);

}  // namespace holmes
