#include "holmes/composer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "holmes/errors.hpp"

namespace holmes {

std::string to_string(ConstraintMode m) { return m == ConstraintMode::hard ? "hard" : "soft"; }

ConstraintMode constraint_mode_from_string(const std::string& s) {
    if (s == "hard") return ConstraintMode::hard;
    if (s == "soft") return ConstraintMode::soft;
    throw InvalidArgument("constraint mode must be 'hard' or 'soft', got '" + s + "'");
}

void SearchParams::validate() const {
    if (!(lambda >= 0.0)) throw InvalidArgument("search: lambda must be >= 0");
    if (n_iters < 0 || n_warm < 0) throw InvalidArgument("search: n_iters and n_warm must be >= 0");
    if (n_explore < 1 || top_k < 1) throw InvalidArgument("search: n_explore and top_k must be >= 1");
    if (top_k > n_explore) throw InvalidArgument("search: top_k must not exceed n_explore");
    if (mutation_degree < 0) throw InvalidArgument("search: mutation_degree must be >= 0");
    if (!(p_genetic >= 0.0 && p_genetic <= 1.0) || !(p_mutation >= 0.0 && p_mutation <= 1.0))
        throw InvalidArgument("search: probabilities must lie in [0, 1]");
    if (surrogate_trees < 1 || surrogate_min_leaf < 1) throw InvalidArgument("search: bad surrogate options");
}

double delta(double x, ConstraintMode mode, double lambda) {
    if (mode == ConstraintMode::hard) return x < 0.0 ? -kInfinity : 0.0;
    if (std::isinf(x) && lambda == 0.0) return 0.0;
    return lambda * x;
}

double objective(const ProfileRecord& rec, double L, const SearchParams& params) {
    return rec.accuracy + delta(L - rec.latency_s, params.constraint_mode, params.lambda);
}

double dual_objective(const ProfileRecord& rec, double A, const SearchParams& params) {
    return rec.latency_s - delta(rec.accuracy - A, params.constraint_mode, params.lambda);
}

double Goal::score(const ProfileRecord& rec, const SearchParams& p) const {
    if (kind == Kind::max_accuracy) return objective(rec, bound, p);
    return -dual_objective(rec, bound, p);
}

double Goal::reported(const ProfileRecord& rec, const SearchParams& p) const {
    return kind == Kind::max_accuracy ? objective(rec, bound, p) : dual_objective(rec, bound, p);
}

bool Goal::satisfied(const ProfileRecord& rec) const {
    return kind == Kind::max_accuracy ? rec.latency_s <= bound : rec.accuracy >= bound;
}

Selector recombine(const Selector& a, const Selector& b, std::size_t cut) {
    if (a.size() != b.size()) throw InvalidArgument("recombine: parent length mismatch");
    if (cut < 1 || cut > a.size()) throw InvalidArgument("recombine: cut point must lie in [1, n]");
    Selector out = a;
    for (std::size_t i = cut; i < a.size(); ++i) out.set(i, b[i]);
    return out;
}

Selector flip_bits(const Selector& b, std::span<const std::size_t> indices) {
    Selector out = b;
    for (auto i : indices) {
        if (i >= b.size()) throw InvalidArgument("flip_bits: index out of range");
        out.flip(i);
    }
    return out;
}

Selector mutate(const Selector& b, int degree, Rng& rng) {
    if (degree < 0 || static_cast<std::size_t>(degree) > b.size())
        throw InvalidArgument("mutate: degree must lie in [0, n]");
    Selector out = b;
    for (int s = 0; s < degree; ++s) out.flip(uniform_index(rng, b.size()));
    return out;
}

Selector mutate(const Selector& b, int degree, std::uint64_t seed) {
    Rng rng(derive_seed(seed, "mutate"));
    return mutate(b, degree, rng);
}

namespace {

// Size uniform in [1, n], then a uniform subset of that size. Uniform bits would concentrate
// around n/2 models, which on large zoos is almost never within a latency budget.
Selector random_selector(std::size_t n, Rng& rng) {
    std::size_t k = 1 + uniform_index(rng, n);
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Selector out(n);
    for (std::size_t i = 0; i < k; ++i) {
        std::swap(idx[i], idx[i + uniform_index(rng, n - i)]);
        out.set(idx[i]);
    }
    return out;
}

// Number of non-empty selectors of length n, saturating.
std::size_t nonempty_space(std::size_t n) {
    if (n >= 63) return std::numeric_limits<std::size_t>::max();
    return (std::size_t{1} << n) - 1;
}

}  // namespace

std::vector<Selector> explore(std::span<const Selector> B, int M, int S, double p, double q, Rng& rng,
                              const ExploreOptions& opts) {
    if (B.empty()) throw InvalidArgument("explore: need at least one parent");
    if (M < 1) throw InvalidArgument("explore: M must be >= 1");
    const std::size_t n = B.front().size();
    for (const auto& b : B)
        if (b.size() != n) throw InvalidArgument("explore: parent length mismatch");
    if (S < 0 || static_cast<std::size_t>(S) > n) throw InvalidArgument("explore: S must lie in [0, n]");

    std::unordered_set<Selector, SelectorHash> taken(B.begin(), B.end());
    if (opts.exclude)
        for (const auto& e : *opts.exclude)
            if (e.size() == n) taken.insert(e);
    std::size_t taken_nonempty = 0;
    for (const auto& t : taken) taken_nonempty += t.empty_ensemble() ? 0 : 1;
    std::size_t space = nonempty_space(n);
    if (space - std::min(space, taken_nonempty) < static_cast<std::size_t>(M)) {
        std::ostringstream msg;
        msg << "explore: only " << space - std::min(space, taken_nonempty) << " novel selectors remain, " << M
            << " requested";
        throw ExhaustionError(msg.str());
    }

    std::vector<Selector> out;
    out.reserve(static_cast<std::size_t>(M));
    std::size_t attempts = 0;
    const std::size_t max_attempts = opts.max_attempts_per_candidate * static_cast<std::size_t>(M);
    while (out.size() < static_cast<std::size_t>(M)) {
        if (++attempts > max_attempts)
            throw ExhaustionError("explore: attempt limit reached before finding enough novel selectors");
        double rnd = uniform01(rng);
        double rnd1 = uniform01(rng);
        const Selector& b1 = B[uniform_index(rng, B.size())];
        const Selector& b2 = B[uniform_index(rng, B.size())];
        const Selector& b3 = B[uniform_index(rng, B.size())];
        Selector cand;
        if (rnd > p) {
            if (opts.stats) ++opts.stats->random_draws;
            cand = random_selector(n, rng);
        } else if (rnd1 > q) {
            if (opts.stats) ++opts.stats->recombination_draws;
            cand = recombine(b1, b2, 1 + uniform_index(rng, n));
        } else {
            if (opts.stats) ++opts.stats->mutation_draws;
            cand = mutate(b3, S, rng);
        }
        if (cand.empty_ensemble() || !taken.insert(cand).second) {
            if (opts.stats) ++opts.stats->rejected;
            continue;
        }
        out.push_back(std::move(cand));
    }
    return out;
}

std::vector<Selector> explore(std::span<const Selector> B, int M, int S, double p, double q, std::uint64_t seed) {
    Rng rng(derive_seed(seed, "explore"));
    return explore(B, M, S, p, q, rng);
}

const ProfileRecord* SearchResult::best_record() const {
    for (const auto& r : profiled)
        if (r.b == best) return &r;
    return nullptr;
}

namespace {

// Profiled set B with exact distinct-call accounting.
class ProfiledSet {
public:
    ProfiledSet(const EnsembleProfiler& profiler, const Goal& goal, const SearchParams& params)
        : profiler_(profiler), goal_(goal), params_(params) {}

    // Profiles b unless already known; returns its record index.
    std::size_t profile(const Selector& b) {
        if (auto it = index_.find(b); it != index_.end()) return it->second;
        records_.push_back(profiler_.profile(b));
        scores_.push_back(goal_.score(records_.back(), params_));
        index_.emplace(b, records_.size() - 1);
        if (best_ < 0 || scores_.back() > scores_[static_cast<std::size_t>(best_)])
            best_ = static_cast<long>(records_.size() - 1);
        return records_.size() - 1;
    }

    bool contains(const Selector& b) const { return index_.count(b) != 0; }
    const std::vector<ProfileRecord>& records() const { return records_; }
    const ProfileRecord& record(std::size_t i) const { return records_[i]; }
    std::size_t size() const { return records_.size(); }
    long best() const { return best_; }

    TrajectoryPoint point(int iter) const {
        TrajectoryPoint tp{iter, 0.0, 0.0, goal_.kind == Goal::Kind::max_accuracy ? -kInfinity : kInfinity};
        if (best_ >= 0) {
            const auto& r = records_[static_cast<std::size_t>(best_)];
            tp = {iter, r.accuracy, r.latency_s, goal_.reported(r, params_)};
        }
        return tp;
    }

    SearchResult finish(std::vector<TrajectoryPoint> trajectory) const {
        SearchResult out;
        out.trajectory = std::move(trajectory);
        out.profiled = records_;
        out.profiler_calls = static_cast<int>(records_.size());
        set_best(out, best_);
        return out;
    }

    // Best = the given record (baselines choose their own answer rather than the argmax).
    void set_best(SearchResult& out, long index) const {
        const std::size_t n = profiler_.zoo().size();
        if (index < 0) {
            out.best = Selector(n);
            out.best_objective = goal_.kind == Goal::Kind::max_accuracy ? -kInfinity : kInfinity;
            out.feasible = false;
            return;
        }
        const auto& r = records_[static_cast<std::size_t>(index)];
        out.best = r.b;
        out.best_objective = goal_.reported(r, params_);
        out.feasible = goal_.satisfied(r);
    }

private:
    const EnsembleProfiler& profiler_;
    const Goal& goal_;
    const SearchParams& params_;
    std::vector<ProfileRecord> records_;
    std::vector<double> scores_;
    std::unordered_map<Selector, std::size_t, SelectorHash> index_;
    long best_ = -1;
};

// Surrogate ranking. By default only predicted violation is penalized; slack earns nothing, otherwise
// a second of slack would outweigh any realistic accuracy difference between candidates.
double ranking_score(const Goal& goal, double acc_hat, double lat_hat, const SearchParams& p) {
    if (goal.kind == Goal::Kind::max_accuracy) {
        double margin = goal.bound - lat_hat;
        return acc_hat + p.lambda * (p.rank_reward_slack ? margin : std::min(0.0, margin));
    }
    double margin = acc_hat - goal.bound;
    return -(lat_hat - p.lambda * (p.rank_reward_slack ? margin : std::min(0.0, margin)));
}

// Surrogates need finite targets: +inf latencies are capped above the worst finite observation.
std::vector<std::pair<Selector, double>> latency_targets(const std::vector<ProfileRecord>& recs, double fallback) {
    double worst = 0.0;
    for (const auto& r : recs)
        if (std::isfinite(r.latency_s)) worst = std::max(worst, r.latency_s);
    double cap = worst > 0.0 ? 2.0 * worst : fallback;
    std::vector<std::pair<Selector, double>> out;
    out.reserve(recs.size());
    for (const auto& r : recs) out.emplace_back(r.b, std::isfinite(r.latency_s) ? r.latency_s : cap);
    return out;
}

}  // namespace

SearchResult smbo_search(const EnsembleProfiler& profiler, const Goal& goal, const SearchParams& params,
                         std::span<const Selector> seed_solutions, const SearchHooks& hooks) {
    params.validate();
    const ModelZoo& zoo = profiler.zoo();
    const std::size_t n = zoo.size();
    if (n == 0) throw InvalidArgument("smbo_search: empty zoo");

    ProfiledSet B(profiler, goal, params);
    std::vector<Selector> members;  // B in insertion order, the parent pool for exploration
    auto excluded = [&](const Selector& b) { return hooks.exclude && hooks.exclude->count(b) != 0; };
    auto add = [&](const Selector& b) {
        if (B.contains(b)) return;
        B.profile(b);
        members.push_back(b);
    };

    // Warm start: seed solutions first, then random selectors until N0 members.
    for (const auto& s : seed_solutions) {
        require_length(s, n, "smbo_search seed");
        if (!s.empty_ensemble() && !excluded(s)) add(s);
    }
    Rng warm_rng(derive_seed(params.seed, "smbo.warm"));
    const std::size_t space = nonempty_space(n);
    std::size_t guard = 0;
    while (members.size() < static_cast<std::size_t>(params.n_warm) && members.size() < space && guard++ < 1000000) {
        Selector b = random_selector(n, warm_rng);
        if (b.empty_ensemble() || excluded(b)) continue;
        add(b);
    }

    std::vector<double> macs;
    if (params.surrogate_profile_features)
        for (const auto& p : zoo.profiles()) macs.push_back(p.macs);
    const double latency_fallback = goal.kind == Goal::Kind::max_accuracy ? 10.0 * std::max(goal.bound, 0.1) : 10.0;

    auto fit = [&](int round, std::uint64_t fit_seed) {
        std::vector<std::pair<Selector, double>> acc;
        acc.reserve(B.size());
        for (const auto& r : B.records()) acc.emplace_back(r.b, r.accuracy);
        auto lat = latency_targets(B.records(), latency_fallback);
        ForestOptions fo;
        fo.n_trees = params.surrogate_trees;
        fo.min_leaf = params.surrogate_min_leaf;
        fo.seed = derive_seed(fit_seed, "surrogate.accuracy");
        auto fa = SelectorSurrogate::fit(acc, fo, macs);
        fo.seed = derive_seed(fit_seed, "surrogate.latency");
        auto fl = SelectorSurrogate::fit(lat, fo, macs);
        if (hooks.on_fit) hooks.on_fit({round, B.size(), &fa, &fl});
        return std::pair{std::move(fa), std::move(fl)};
    };

    std::vector<TrajectoryPoint> trajectory{B.point(0)};
    Rng explore_rng(derive_seed(params.seed, "smbo.explore"));
    const std::uint64_t surrogate_seed = derive_seed(params.seed, "smbo.surrogate");

    for (int iter = 1; iter <= params.n_iters; ++iter) {
        auto [fa, fl] = fit(iter - 1, surrogate_seed);

        ExploreOptions eo;
        eo.exclude = hooks.exclude;
        auto candidates = explore(members, params.n_explore, params.mutation_degree, params.p_genetic,
                                  params.p_mutation, explore_rng, eo);

        std::vector<std::pair<double, std::size_t>> ranked;
        ranked.reserve(candidates.size());
        for (std::size_t c = 0; c < candidates.size(); ++c)
            ranked.emplace_back(
                ranking_score(goal, fa.predict(candidates[c]), fl.predict(candidates[c]), params), c);
        std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.first > b.first; });

        std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(params.top_k), ranked.size());
        for (std::size_t k = 0; k < take; ++k) add(candidates[ranked[k].second]);
        trajectory.push_back(B.point(iter));
    }
    if (hooks.on_fit && params.n_iters > 0) fit(params.n_iters, surrogate_seed);

    return B.finish(std::move(trajectory));
}

SearchResult dual_search(const EnsembleProfiler& profiler, double accuracy_floor, const SearchParams& params,
                         std::span<const Selector> seed_solutions, const SearchHooks& hooks) {
    return smbo_search(profiler, Goal::accuracy_floor(accuracy_floor), params, seed_solutions, hooks);
}

namespace {

SearchResult accrete(const EnsembleProfiler& profiler, double L, const SearchParams& params,
                     std::span<const std::size_t> order, ProfiledSet& B) {
    const std::size_t n = profiler.zoo().size();
    Selector current(n);
    long current_index = -1;
    std::vector<TrajectoryPoint> trajectory;
    int step = 0;
    for (auto m : order) {
        Selector cand = current;
        cand.set(m);
        auto idx = B.profile(cand);
        if (!(B.record(idx).latency_s <= L)) break;  // exceeded: profiled, rolled back
        current = cand;
        current_index = static_cast<long>(idx);
        const auto& r = B.record(idx);
        trajectory.push_back({++step, r.accuracy, r.latency_s, objective(r, L, params)});
    }
    SearchResult out = B.finish(std::move(trajectory));
    B.set_best(out, current_index);
    return out;
}

}  // namespace

SearchResult baseline_rd(const EnsembleProfiler& profiler, double L, const SearchParams& params, std::uint64_t seed) {
    const std::size_t n = profiler.zoo().size();
    if (n == 0) throw InvalidArgument("baseline_rd: empty zoo");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(seed, "baseline.rd"));
    for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[uniform_index(rng, i + 1)]);
    Goal goal = Goal::latency_budget(L);
    ProfiledSet B(profiler, goal, params);
    return accrete(profiler, L, params, order, B);
}

SearchResult baseline_af(const EnsembleProfiler& profiler, double L, const SearchParams& params) {
    const auto& zoo = profiler.zoo();
    if (zoo.size() == 0) throw InvalidArgument("baseline_af: empty zoo");
    std::vector<std::size_t> order(zoo.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return zoo[a].target_auc > zoo[b].target_auc; });
    Goal goal = Goal::latency_budget(L);
    ProfiledSet B(profiler, goal, params);
    return accrete(profiler, L, params, order, B);
}

SearchResult baseline_lf(const EnsembleProfiler& profiler, double L, const SearchParams& params) {
    const std::size_t n = profiler.zoo().size();
    if (n == 0) throw InvalidArgument("baseline_lf: empty zoo");
    Goal goal = Goal::latency_budget(L);
    ProfiledSet B(profiler, goal, params);
    std::vector<double> standalone(n);
    for (std::size_t i = 0; i < n; ++i) standalone[i] = B.record(B.profile(Selector::single(n, i))).latency_s;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return standalone[a] < standalone[b]; });
    return accrete(profiler, L, params, order, B);
}

SearchResult baseline_npo(const EnsembleProfiler& profiler, double L, const SearchParams& params, int budget,
                          std::size_t max_subset_size, std::span<const Selector> seed_solutions, std::uint64_t seed) {
    const std::size_t n = profiler.zoo().size();
    if (n == 0) throw InvalidArgument("baseline_npo: empty zoo");
    if (budget < 0) throw InvalidArgument("baseline_npo: budget must be >= 0");
    max_subset_size = std::clamp<std::size_t>(max_subset_size, 1, n);

    Goal goal = Goal::latency_budget(L);
    ProfiledSet B(profiler, goal, params);
    for (const auto& s : seed_solutions) {
        require_length(s, n, "baseline_npo seed");
        if (!s.empty_ensemble()) B.profile(s);
    }
    std::vector<TrajectoryPoint> trajectory{B.point(0)};

    Rng rng(derive_seed(seed, "baseline.npo"));
    std::vector<std::size_t> pool(n);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    int calls = 0;
    std::size_t misses = 0;
    while (calls < budget && misses < 100000) {
        std::size_t k = 1 + uniform_index(rng, max_subset_size);
        for (std::size_t i = 0; i < k; ++i) std::swap(pool[i], pool[i + uniform_index(rng, n - i)]);
        Selector b(n);
        for (std::size_t i = 0; i < k; ++i) b.set(pool[i]);
        if (B.contains(b)) {
            ++misses;
            continue;
        }
        misses = 0;
        B.profile(b);
        ++calls;
        trajectory.push_back(B.point(calls));
    }
    return B.finish(std::move(trajectory));
}

SearchResult brute_force_oracle(const EnsembleProfiler& profiler, const Goal& goal, const SearchParams& params) {
    const std::size_t n = profiler.zoo().size();
    if (n > kBruteForceMaxModels)
        throw GuardError("brute_force_oracle: " + std::to_string(n) + " models exceeds the limit of " +
                         std::to_string(kBruteForceMaxModels));
    if (n == 0) throw InvalidArgument("brute_force_oracle: empty zoo");

    const std::size_t total = (std::size_t{1} << n) - 1;
    auto selector_of = [n](std::size_t mask) {
        Selector b(n);
        for (std::size_t i = 0; i < n; ++i)
            if (mask >> i & 1U) b.set(i);
        return b;
    };
    // Profile in parallel into fixed slots, then commit in mask order.
    std::vector<ProfileRecord> recs(total);
    unsigned workers = std::max(1u, std::min<unsigned>(std::thread::hardware_concurrency(), 16u));
    std::vector<std::exception_ptr> errors(workers);
    {
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < workers; ++w)
            pool.emplace_back([&, w] {
                try {
                    for (std::size_t m = 1 + w; m <= total; m += workers) recs[m - 1] = profiler.profile(selector_of(m));
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);

    struct Replay final : EnsembleProfiler {
        const EnsembleProfiler& base;
        std::unordered_map<Selector, ProfileRecord, SelectorHash> known;
        explicit Replay(const EnsembleProfiler& b) : base(b) {}
        const ModelZoo& zoo() const override { return base.zoo(); }
        ProfileRecord profile(const Selector& b) const override { return known.at(b); }
    } replay(profiler);
    for (const auto& r : recs) replay.known.emplace(r.b, r);

    ProfiledSet B(replay, goal, params);
    for (const auto& r : recs) B.profile(r.b);
    return B.finish({B.point(0)});
}

std::string search_result_json(const SearchResult& r, const Goal& goal, const SearchParams& params) {
    auto num = [](double v) -> nlohmann::ordered_json {
        if (std::isfinite(v)) return v;
        return nullptr;
    };
    nlohmann::ordered_json j;
    j["goal"] = goal.kind == Goal::Kind::max_accuracy ? "max_accuracy" : "min_latency";
    j["bound"] = goal.bound;
    j["constraint_mode"] = to_string(params.constraint_mode);
    j["best"] = r.best.to_string();
    j["best_objective"] = num(r.best_objective);
    j["feasible"] = r.feasible;
    j["profiler_calls"] = r.profiler_calls;
    auto& traj = j["trajectory"] = nlohmann::ordered_json::array();
    for (const auto& t : r.trajectory)
        traj.push_back({{"iter", t.iter},
                        {"best_acc", num(t.best_accuracy)},
                        {"best_lat", num(t.best_latency)},
                        {"best_obj", num(t.best_objective)}});
    auto& prof = j["profiled"] = nlohmann::ordered_json::array();
    for (const auto& p : r.profiled)
        prof.push_back({{"b", p.b.to_string()}, {"accuracy", num(p.accuracy)}, {"latency_s", num(p.latency_s)}});
    return j.dump(2) + "\n";
}

std::string trajectory_csv(const SearchResult& r) {
    std::ostringstream out;
    out.precision(17);
    out << "iter,best_acc,best_lat,best_obj\n";
    for (const auto& t : r.trajectory)
        out << t.iter << "," << t.best_accuracy << "," << t.best_latency << "," << t.best_objective << "\n";
    return out.str();
}

}  // namespace holmes
