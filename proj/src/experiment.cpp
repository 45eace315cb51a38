#include "holmes/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "holmes/errors.hpp"
#include "holmes/metrics.hpp"
#include "holmes/rng.hpp"

namespace holmes {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

// ---- config parsing

namespace {

const std::set<std::string> kMethods{"RD", "AF", "LF", "NPO", "HOLMES", "ORACLE"};

// Walks one JSON object, remembering which keys were consumed so leftovers can be rejected.
class Fields {
public:
    Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
    }

    template <typename F>
    void opt(const char* key, F&& f) {
        seen_.insert(key);
        if (j_.contains(key)) f(j_.at(key), path_ + "." + key);
    }

    void finish() const {
        for (const auto& [k, v] : j_.items())
            if (!seen_.count(k)) throw ConfigError(path_ + "." + k + ": unknown field");
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

double as_number(const json& v, const std::string& path) {
    if (!v.is_number()) throw ConfigError(path + ": expected a number");
    return v.get<double>();
}

long long as_integer(const json& v, const std::string& path) {
    if (!v.is_number_integer()) throw ConfigError(path + ": expected an integer");
    return v.get<long long>();
}

std::uint64_t as_seed(const json& v, const std::string& path) {
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    auto i = as_integer(v, path);
    if (i < 0) throw ConfigError(path + ": expected a non-negative integer");
    return static_cast<std::uint64_t>(i);
}

bool as_bool(const json& v, const std::string& path) {
    if (!v.is_boolean()) throw ConfigError(path + ": expected true or false");
    return v.get<bool>();
}

std::string as_string(const json& v, const std::string& path) {
    if (!v.is_string()) throw ConfigError(path + ": expected a string");
    return v.get<std::string>();
}

template <typename T, typename F>
std::vector<T> as_array(const json& v, const std::string& path, F&& elem) {
    if (!v.is_array()) throw ConfigError(path + ": expected an array");
    std::vector<T> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(elem(v[i], path + "[" + std::to_string(i) + "]"));
    return out;
}

int as_int(const json& v, const std::string& path) { return static_cast<int>(as_integer(v, path)); }

void parse_executor(const json& j, const std::string& path, ExecutorModel& e) {
    Fields f(j, path);
    f.opt("n_slots", [&](const json& v, const std::string& p) { e.n_slots = as_int(v, p); });
    f.opt("per_mac_seconds", [&](const json& v, const std::string& p) { e.per_mac_seconds = as_number(v, p); });
    f.opt("fixed_overhead_s", [&](const json& v, const std::string& p) { e.fixed_overhead_s = as_number(v, p); });
    f.opt("batch_size", [&](const json& v, const std::string& p) { e.batch_size = as_int(v, p); });
    f.finish();
}

void parse_runtime(const json& j, const std::string& path, RuntimeConfig& r) {
    Fields f(j, path);
    f.opt("patients", [&](const json& v, const std::string& p) { r.patients = as_int(v, p); });
    f.opt("rates", [&](const json& v, const std::string& p) {
        if (!v.is_object()) throw ConfigError(p + ": expected an object of modality -> samples per second");
        r.rates.clear();
        for (const auto& [k, x] : v.items()) r.rates[k] = as_number(x, p + "." + k);
    });
    f.opt("window_s", [&](const json& v, const std::string& p) { r.window_s = as_number(v, p); });
    f.opt("duration_s", [&](const json& v, const std::string& p) { r.duration_s = as_number(v, p); });
    f.opt("aggregation_cost_s", [&](const json& v, const std::string& p) { r.aggregation_cost_s = as_number(v, p); });
    f.opt("correlation", [&](const json& v, const std::string& p) { r.correlation = as_number(v, p); });
    f.opt("positive_rate", [&](const json& v, const std::string& p) { r.positive_rate = as_number(v, p); });
    f.opt("stagger_patients", [&](const json& v, const std::string& p) { r.stagger_patients = as_bool(v, p); });
    f.finish();
}

}  // namespace

ExperimentConfig parse_config(const json& j) {
    ExperimentConfig c;
    Fields f(j, "config");
    f.opt("seed", [&](const json& v, const std::string& p) { c.seed = as_seed(v, p); });
    f.opt("output_dir", [&](const json& v, const std::string& p) { c.output_dir = as_string(v, p); });
    f.opt("repeats", [&](const json& v, const std::string& p) { c.repeats = as_int(v, p); });
    f.opt("methods", [&](const json& v, const std::string& p) {
        c.methods = as_array<std::string>(v, p, [](const json& x, const std::string& q) {
            auto m = as_string(x, q);
            if (!kMethods.count(m)) throw ConfigError(q + ": unknown method '" + m + "'");
            return m;
        });
    });
    f.opt("latency_budget_s", [&](const json& v, const std::string& p) { c.latency_budget_s = as_number(v, p); });
    f.opt("latency_budgets_s", [&](const json& v, const std::string& p) {
        c.latency_budgets_s = as_array<double>(v, p, as_number);
    });
    f.opt("vary_instance", [&](const json& v, const std::string& p) { c.vary_instance = as_bool(v, p); });
    f.opt("zoo", [&](const json& v, const std::string& p) {
        Fields z(v, p);
        z.opt("leads", [&](const json& x, const std::string& q) { c.zoo.leads = as_int(x, q); });
        z.opt("filters", [&](const json& x, const std::string& q) { c.zoo.filters = as_array<int>(x, q, as_int); });
        z.opt("blocks", [&](const json& x, const std::string& q) { c.zoo.blocks = as_array<int>(x, q, as_int); });
        z.opt("kappa", [&](const json& x, const std::string& q) { c.zoo.gen.kappa = as_number(x, q); });
        z.opt("input_len", [&](const json& x, const std::string& q) { c.zoo.gen.input_len = as_int(x, q); });
        z.opt("auc_noise", [&](const json& x, const std::string& q) { c.zoo.gen.auc_noise = as_number(x, q); });
        z.opt("path", [&](const json& x, const std::string& q) { c.zoo.path = as_string(x, q); });
        z.finish();
    });
    f.opt("cohort", [&](const json& v, const std::string& p) {
        Fields z(v, p);
        auto count = [](const json& x, const std::string& q) {
            auto n = as_integer(x, q);
            if (n < 1) throw ConfigError(q + ": must be >= 1");
            return static_cast<std::size_t>(n);
        };
        z.opt("n_pos", [&](const json& x, const std::string& q) { c.cohort.n_pos = count(x, q); });
        z.opt("n_neg", [&](const json& x, const std::string& q) { c.cohort.n_neg = count(x, q); });
        z.opt("correlation", [&](const json& x, const std::string& q) { c.cohort.correlation = as_number(x, q); });
        z.finish();
    });
    f.opt("system", [&](const json& v, const std::string& p) {
        Fields z(v, p);
        z.opt("slots", [&](const json& x, const std::string& q) { c.system.slots = as_int(x, q); });
        z.opt("patients", [&](const json& x, const std::string& q) { c.system.patients = as_int(x, q); });
        z.opt("per_patient_rate_qps",
              [&](const json& x, const std::string& q) { c.system.per_patient_rate_qps = as_number(x, q); });
        z.finish();
    });
    f.opt("executor", [&](const json& v, const std::string& p) { parse_executor(v, p, c.executor); });
    f.opt("search", [&](const json& v, const std::string& p) {
        Fields z(v, p);
        auto& s = c.search;
        z.opt("lambda", [&](const json& x, const std::string& q) { s.lambda = as_number(x, q); });
        z.opt("n_iters", [&](const json& x, const std::string& q) { s.n_iters = as_int(x, q); });
        z.opt("n_warm", [&](const json& x, const std::string& q) { s.n_warm = as_int(x, q); });
        z.opt("n_explore", [&](const json& x, const std::string& q) { s.n_explore = as_int(x, q); });
        z.opt("top_k", [&](const json& x, const std::string& q) { s.top_k = as_int(x, q); });
        z.opt("mutation_degree", [&](const json& x, const std::string& q) { s.mutation_degree = as_int(x, q); });
        z.opt("p_genetic", [&](const json& x, const std::string& q) { s.p_genetic = as_number(x, q); });
        z.opt("p_mutation", [&](const json& x, const std::string& q) { s.p_mutation = as_number(x, q); });
        z.opt("constraint_mode", [&](const json& x, const std::string& q) {
            try {
                s.constraint_mode = constraint_mode_from_string(as_string(x, q));
            } catch (const InvalidArgument& e) {
                throw ConfigError(q + ": " + e.what());
            }
        });
        z.opt("surrogate_trees", [&](const json& x, const std::string& q) { s.surrogate_trees = as_int(x, q); });
        z.opt("surrogate_min_leaf", [&](const json& x, const std::string& q) { s.surrogate_min_leaf = as_int(x, q); });
        z.opt("surrogate_profile_features",
              [&](const json& x, const std::string& q) { s.surrogate_profile_features = as_bool(x, q); });
        z.opt("rank_reward_slack", [&](const json& x, const std::string& q) { s.rank_reward_slack = as_bool(x, q); });
        z.finish();
    });
    f.opt("latency_profile", [&](const json& v, const std::string& p) {
        Fields z(v, p);
        z.opt("trace_s", [&](const json& x, const std::string& q) { c.latency.trace_s = as_number(x, q); });
        z.opt("ts_duration_s", [&](const json& x, const std::string& q) { c.latency.ts_duration_s = as_number(x, q); });
        z.opt("capacity_queries",
              [&](const json& x, const std::string& q) { c.latency.capacity_queries = as_int(x, q); });
        z.finish();
    });
    f.opt("surrogate_report", [&](const json& v, const std::string& p) {
        Fields z(v, p);
        z.opt("probes", [&](const json& x, const std::string& q) { c.surrogate_report.probes = as_int(x, q); });
        z.opt("probe_source", [&](const json& x, const std::string& q) {
            auto s = as_string(x, q);
            if (s != "explored" && s != "random") throw ConfigError(q + ": expected 'explored' or 'random'");
            c.surrogate_report.probe_source = s;
        });
        z.finish();
    });
    f.opt("serve", [&](const json& v, const std::string& p) {
        Fields z(v, p);
        auto& s = c.serve;
        z.opt("runtime", [&](const json& x, const std::string& q) { parse_runtime(x, q, s.runtime); });
        z.opt("executor", [&](const json& x, const std::string& q) {
            ExecutorModel e = c.executor;
            e.n_slots = c.system.slots;
            parse_executor(x, q, e);
            s.executor = e;
        });
        z.opt("selector", [&](const json& x, const std::string& q) { s.selector = as_string(x, q); });
        z.opt("models", [&](const json& x, const std::string& q) { s.models = as_array<std::string>(x, q, as_string); });
        z.opt("mode", [&](const json& x, const std::string& q) {
            s.mode = as_string(x, q);
            if (s.mode != "des" && s.mode != "wallclock") throw ConfigError(q + ": expected 'des' or 'wallclock'");
        });
        z.opt("time_scale", [&](const json& x, const std::string& q) { s.time_scale = as_number(x, q); });
        z.opt("patients_sweep", [&](const json& x, const std::string& q) { s.patients_sweep = as_array<int>(x, q, as_int); });
        z.opt("slots_sweep", [&](const json& x, const std::string& q) { s.slots_sweep = as_array<int>(x, q, as_int); });
        z.opt("batch_period_s", [&](const json& x, const std::string& q) { s.batch.batch_period_s = as_number(x, q); });
        z.opt("sample_interval_s",
              [&](const json& x, const std::string& q) { s.batch.sample_interval_s = as_number(x, q); });
        z.finish();
    });
    f.finish();
    c.validate();
    return c;
}

void ExperimentConfig::validate() const {
    auto wrap = [](const char* path, auto&& fn) {
        try {
            fn();
        } catch (const std::exception& e) {
            throw ConfigError(std::string(path) + ": " + e.what());
        }
    };
    if (repeats < 1) throw ConfigError("config.repeats: must be >= 1");
    if (methods.empty()) throw ConfigError("config.methods: at least one method required");
    if (!(latency_budget_s > 0.0)) throw ConfigError("config.latency_budget_s: must be > 0");
    for (std::size_t i = 0; i < latency_budgets_s.size(); ++i)
        if (!(latency_budgets_s[i] > 0.0))
            throw ConfigError("config.latency_budgets_s[" + std::to_string(i) + "]: must be > 0");
    if (!(cohort.correlation >= 0.0 && cohort.correlation < 1.0))
        throw ConfigError("config.cohort.correlation: must lie in [0, 1)");
    if (!zoo.path && (zoo.leads < 1 || zoo.filters.empty() || zoo.blocks.empty()))
        throw ConfigError("config.zoo: leads must be >= 1 and grids non-empty");
    wrap("config.system", [&] { system.validate(); });
    wrap("config.executor", [&] { executor.validate(); });
    wrap("config.search", [&] { search.validate(); });
    if (latency.capacity_queries < 100) throw ConfigError("config.latency_profile.capacity_queries: must be >= 100");
    if (!(latency.trace_s > 0.0) || !(latency.ts_duration_s > 0.0))
        throw ConfigError("config.latency_profile: durations must be > 0");
    if (surrogate_report.probes < 1) throw ConfigError("config.surrogate_report.probes: must be >= 1");
    wrap("config.serve.runtime", [&] { serve.runtime.validate(); });
    if (serve.executor) wrap("config.serve.executor", [&] { serve.executor->validate(); });
    if (!(serve.time_scale > 0.0)) throw ConfigError("config.serve.time_scale: must be > 0");
    for (int p : serve.patients_sweep)
        if (p < 1) throw ConfigError("config.serve.patients_sweep: entries must be >= 1");
    for (int s : serve.slots_sweep)
        if (s < 1) throw ConfigError("config.serve.slots_sweep: entries must be >= 1");
}

ExperimentConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config file '" + path.string() + "': " + e.what());
    }
    return parse_config(j);
}

// ---- instances and methods

std::uint64_t instance_seed(const ExperimentConfig& cfg, int repeat) {
    return cfg.vary_instance ? derive_seed(cfg.seed, "instance", static_cast<std::uint64_t>(repeat))
                             : derive_seed(cfg.seed, "instance");
}

std::uint64_t method_seed(const ExperimentConfig& cfg, const std::string& method, int repeat) {
    return derive_seed(cfg.seed, method, static_cast<std::uint64_t>(repeat));
}

ModelZoo build_zoo(const ExperimentConfig& cfg, int repeat) {
    if (cfg.zoo.path) return load_zoo(*cfg.zoo.path);
    return generate_zoo(cfg.zoo.leads, cfg.zoo.filters, cfg.zoo.blocks, derive_seed(instance_seed(cfg, repeat), "zoo"),
                        cfg.zoo.gen);
}

namespace {

ExecutorModel profiling_executor(const ExperimentConfig& cfg) {
    ExecutorModel e = cfg.executor;
    e.n_slots = cfg.system.slots;
    return e;
}

}  // namespace

Instance::Instance(const ExperimentConfig& cfg, ModelZoo z, Cohort c, std::uint64_t latency_seed, double budget)
    : zoo(std::move(z)),
      cohort(std::move(c)),
      profiler(zoo, cohort, profiling_executor(cfg),
               [&] {
                   SystemConfig s = cfg.system;
                   s.latency_budget_s = budget;
                   return s;
               }(),
               latency_seed, cfg.latency) {}

std::unique_ptr<Instance> build_instance(const ExperimentConfig& cfg, int repeat, double budget) {
    auto inst = instance_seed(cfg, repeat);
    auto zoo = build_zoo(cfg, repeat);
    auto cohort = synthesize_cohort(zoo, cfg.cohort.n_pos, cfg.cohort.n_neg, cfg.cohort.correlation,
                                    derive_seed(inst, "cohort"));
    return std::make_unique<Instance>(cfg, std::move(zoo), std::move(cohort), derive_seed(inst, "latency"), budget);
}

namespace {

// An empty ensemble predicts nothing: score it as a constant predictor.
AccuracyReport chance_report(const Cohort& cohort) {
    std::vector<double> flat(cohort.n_samples(), 0.5);
    LabeledScores d(cohort.labels(), flat);
    auto fa = f1_accuracy(d, kDefaultThreshold);
    return {roc_auc(d), pr_auc(d), fa.f1, fa.accuracy};
}

MethodRun finish_run(const std::string& method, int repeat, double budget, SearchResult r, const Instance& inst) {
    MethodRun m;
    m.method = method;
    m.repeat = repeat;
    m.budget = budget;
    m.result = std::move(r);
    m.empty = m.result.best.empty_ensemble();
    if (m.empty) {
        m.report = chance_report(inst.cohort);
    } else {
        m.report = inst.profiler.report(m.result.best);
        m.latency_s = inst.profiler.profile(m.result.best).latency_s;
    }
    return m;
}

}  // namespace

std::vector<MethodRun> run_methods(const ExperimentConfig& cfg, Instance& inst, int repeat, double budget,
                                   const SearchHooks& holmes_hooks) {
    const auto& prof = inst.profiler;
    SearchParams sp = cfg.search;
    sp.seed = method_seed(cfg, "HOLMES", repeat);

    auto rd = baseline_rd(prof, budget, sp, method_seed(cfg, "RD", repeat));
    auto af = baseline_af(prof, budget, sp);
    auto lf = baseline_lf(prof, budget, sp);
    std::vector<Selector> seeds;
    bool seed_feasible = false;
    for (const auto* r : {&rd, &af, &lf}) {
        if (r->best.empty_ensemble()) continue;
        seed_feasible = seed_feasible || r->feasible;
        if (std::find(seeds.begin(), seeds.end(), r->best) == seeds.end()) seeds.push_back(r->best);
    }

    std::vector<MethodRun> out;
    for (const auto& m : cfg.methods) {
        SearchResult r;
        if (m == "RD") r = rd;
        else if (m == "AF") r = af;
        else if (m == "LF") r = lf;
        else if (m == "HOLMES") r = smbo_search(prof, budget, sp, seeds, holmes_hooks);
        else if (m == "NPO") {
            int extra = std::max(0, sp.budget() - static_cast<int>(seeds.size()));
            std::size_t max_size = std::max<std::size_t>(1, lf.best.popcount());
            r = baseline_npo(prof, budget, sp, extra, max_size, seeds, method_seed(cfg, "NPO", repeat));
        } else if (m == "ORACLE") r = brute_force_oracle(prof, budget, sp);
        else throw ConfigError("config.methods: unknown method '" + m + "'");
        out.push_back(finish_run(m, repeat, budget, std::move(r), inst));
        out.back().seed_feasible = seed_feasible;
    }
    return out;
}

// ---- output helpers

void prepare_output_dir(const fs::path& dir, bool force) {
    if (fs::exists(dir)) {
        if (!fs::is_directory(dir)) throw ConfigError("output path '" + dir.string() + "' is not a directory");
        if (!fs::is_empty(dir) && !force)
            throw ConfigError("output directory '" + dir.string() + "' is not empty; pass --force to overwrite");
    }
    fs::create_directories(dir);
}

namespace {

std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::ostringstream o;
    o.precision(17);
    o << v;
    return o.str();
}

ojson jnum(double v) {
    if (std::isfinite(v)) return v;
    return nullptr;
}

void write_file(const fs::path& path, const std::string& content, std::vector<fs::path>& files) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write '" + path.string() + "'");
    out << content;
    files.push_back(path);
}

void write_manifest(const fs::path& dir, const std::string& command, const ExperimentConfig& cfg,
                    std::vector<fs::path>& files) {
    std::vector<std::string> rel;
    for (const auto& f : files) rel.push_back(fs::relative(f, dir).generic_string());
    std::sort(rel.begin(), rel.end());
    ojson m{{"layout_version", kOutputLayoutVersion}, {"command", command}, {"seed", cfg.seed}, {"files", rel}};
    write_file(dir / "manifest.json", m.dump(2) + "\n", files);
}

struct Stat {
    double mean = std::nan("");
    double std = std::nan("");
};

// Mean and sample standard deviation; NaN entries are skipped.
Stat summarize(const std::vector<double>& xs) {
    std::vector<double> v;
    for (double x : xs)
        if (!std::isnan(x)) v.push_back(x);
    Stat s;
    if (v.empty()) return s;
    s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    if (v.size() > 1) {
        double ss = 0.0;
        for (double x : v) ss += (x - s.mean) * (x - s.mean);
        s.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
    }
    return s;
}

std::string run_json(const MethodRun& m, const ExperimentConfig& cfg) {
    SearchParams sp = cfg.search;
    auto j = ojson::parse(search_result_json(m.result, Goal::latency_budget(m.budget), sp));
    ojson out{{"method", m.method}, {"repeat", m.repeat}, {"latency_budget_s", m.budget}};
    for (auto& [k, v] : j.items()) out[k] = v;
    out["empty"] = m.empty;
    out["metrics"] = {{"roc_auc", m.report.roc_auc},
                      {"pr_auc", m.report.pr_auc},
                      {"f1", m.report.f1},
                      {"accuracy", m.report.accuracy},
                      {"latency_s", jnum(m.latency_s)}};
    return out.dump(2) + "\n";
}

std::string results_table(const std::vector<MethodRun>& runs, const std::vector<std::string>& methods) {
    std::ostringstream o;
    o << "method,metric,mean,std\n";
    for (const auto& method : methods) {
        std::vector<double> roc, pr, f1, acc, lat, calls;
        for (const auto& r : runs) {
            if (r.method != method) continue;
            roc.push_back(r.report.roc_auc);
            pr.push_back(r.report.pr_auc);
            f1.push_back(r.report.f1);
            acc.push_back(r.report.accuracy);
            lat.push_back(r.empty || !std::isfinite(r.latency_s) ? std::nan("") : r.latency_s);
            calls.push_back(r.result.profiler_calls);
        }
        auto row = [&](const char* metric, const std::vector<double>& v) {
            auto s = summarize(v);
            o << method << "," << metric << "," << fmt(s.mean) << "," << fmt(s.std) << "\n";
        };
        row("roc_auc", roc);
        row("pr_auc", pr);
        row("f1", f1);
        row("accuracy", acc);
        row("latency_s", lat);
        row("profiler_calls", calls);
    }
    return o.str();
}

}  // namespace

// ---- commands

void cmd_zoo_generate(const ExperimentConfig& cfg, const fs::path& out, bool force) {
    prepare_output_dir(out, force);
    std::vector<fs::path> files;
    write_file(out / "zoo.json", zoo_to_json(build_zoo(cfg, 0)), files);
    write_manifest(out, "zoo generate", cfg, files);
}

ComposeOutcome cmd_compose(const ExperimentConfig& cfg, const fs::path& out, bool force) {
    prepare_output_dir(out, force);
    ComposeOutcome res;
    for (int r = 0; r < cfg.repeats; ++r) {
        auto inst = build_instance(cfg, r, cfg.latency_budget_s);
        for (auto& m : run_methods(cfg, *inst, r, cfg.latency_budget_s)) {
            std::string stem = "r" + std::to_string(r);
            write_file(out / "runs" / m.method / (stem + ".json"), run_json(m, cfg), res.files);
            write_file(out / "trajectories" / m.method / (stem + ".csv"), trajectory_csv(m.result), res.files);
            res.runs.push_back(std::move(m));
        }
    }
    write_file(out / "results.csv", results_table(res.runs, cfg.methods), res.files);
    write_manifest(out, "compose", cfg, res.files);
    return res;
}

ComposeOutcome cmd_latency_sweep(const ExperimentConfig& cfg, const fs::path& out, bool force) {
    if (cfg.latency_budgets_s.size() < 2) throw ConfigError("config.latency_budgets_s: need at least 2 grid points");
    prepare_output_dir(out, force);
    ComposeOutcome res;
    for (int r = 0; r < cfg.repeats; ++r) {
        // The profiler caches per selector and does not depend on L, so one instance serves the grid.
        auto inst = build_instance(cfg, r, cfg.latency_budgets_s.front());
        for (double L : cfg.latency_budgets_s)
            for (auto& m : run_methods(cfg, *inst, r, L)) res.runs.push_back(std::move(m));
    }
    std::ostringstream rows;
    rows << "latency_budget_s,method,repeat,roc_auc,latency_s,objective,feasible,profiler_calls\n";
    for (const auto& m : res.runs)
        rows << fmt(m.budget) << "," << m.method << "," << m.repeat << "," << fmt(m.report.roc_auc) << ","
             << fmt(m.latency_s) << "," << fmt(m.result.best_objective) << "," << (m.result.feasible ? 1 : 0) << ","
             << m.result.profiler_calls << "\n";
    write_file(out / "sweep.csv", rows.str(), res.files);

    std::ostringstream summary;
    summary << "latency_budget_s,method,mean_roc_auc,std_roc_auc,feasible_runs\n";
    for (double L : cfg.latency_budgets_s)
        for (const auto& method : cfg.methods) {
            std::vector<double> v;
            int feasible = 0;
            for (const auto& m : res.runs)
                if (m.method == method && m.budget == L) {
                    v.push_back(m.report.roc_auc);
                    feasible += m.result.feasible ? 1 : 0;
                }
            auto s = summarize(v);
            summary << fmt(L) << "," << method << "," << fmt(s.mean) << "," << fmt(s.std) << "," << feasible << "\n";
        }
    write_file(out / "sweep_summary.csv", summary.str(), res.files);
    write_manifest(out, "latency-sweep", cfg, res.files);
    return res;
}

Selector serve_selector(const ExperimentConfig& cfg, const ModelZoo& zoo) {
    const auto& s = cfg.serve;
    if (!s.selector.empty()) {
        Selector b;
        try {
            b = Selector::from_string(s.selector);
        } catch (const std::exception& e) {
            throw ConfigError(std::string("config.serve.selector: ") + e.what());
        }
        if (b.size() != zoo.size())
            throw ConfigError("config.serve.selector: length " + std::to_string(b.size()) + " does not match zoo size " +
                              std::to_string(zoo.size()));
        if (b.empty_ensemble()) throw ConfigError("config.serve.selector: selects no models");
        return b;
    }
    Selector b(zoo.size());
    for (const auto& id : s.models) {
        try {
            b.set(zoo.index_of(id));
        } catch (const std::exception&) {
            throw ConfigError("config.serve.models: unknown model id '" + id + "'");
        }
    }
    if (b.empty_ensemble()) b.set(0);
    return b;
}

namespace {

ExecutorModel serving_executor(const ExperimentConfig& cfg) {
    return cfg.serve.executor ? *cfg.serve.executor : profiling_executor(cfg);
}

}  // namespace

ServeOutcome cmd_serve_sim(const ExperimentConfig& cfg, const fs::path& out, bool force) {
    prepare_output_dir(out, force);
    auto zoo = build_zoo(cfg, 0);
    auto b = serve_selector(cfg, zoo);
    auto exec = serving_executor(cfg);
    const auto& rt = cfg.serve.runtime;
    const std::uint64_t seed = derive_seed(cfg.seed, "serve");

    ServeOutcome res;
    std::vector<fs::path> files;
    std::vector<QueryTrace> traces = cfg.serve.mode == "wallclock"
                                         ? run_wallclock(zoo, b, exec, rt, seed, cfg.serve.time_scale)
                                         : run_simulation(zoo, b, exec, rt, seed);
    std::ostringstream jl;
    write_traces_jsonl(traces, jl);
    write_file(out / "traces.jsonl", jl.str(), files);
    res.report = e2e_percentiles(traces);

    // The latency profiler's estimate for the same ensemble and load, for comparison.
    SystemConfig sys{exec.n_slots, rt.patients, 1.0 / rt.window_s, cfg.latency_budget_s};
    auto est = latency_profile(b, zoo, exec, sys, derive_seed(cfg.seed, "serve.estimate"), cfg.latency);
    auto report = ojson::parse(e2e_report_json(res.report));
    report["mode"] = cfg.serve.mode;
    report["selector"] = b.to_string();
    report["latency_estimate"] = ojson::parse(latency_report_json(est));
    write_file(out / "percentiles.json", report.dump(2) + "\n", files);

    if (!cfg.serve.patients_sweep.empty() || !cfg.serve.slots_sweep.empty()) {
        auto patients = cfg.serve.patients_sweep.empty() ? std::vector<int>{rt.patients} : cfg.serve.patients_sweep;
        auto slots = cfg.serve.slots_sweep.empty() ? std::vector<int>{exec.n_slots} : cfg.serve.slots_sweep;
        std::ostringstream csv;
        csv << "patients,slots,n_queries,p50_query_s,p95_query_s,p99_query_s,p95_capture_s\n";
        for (int p : patients)
            for (int s : slots) {
                RuntimeConfig r = rt;
                r.patients = p;
                ExecutorModel e = exec;
                e.n_slots = s;
                auto rep = e2e_percentiles(run_simulation(zoo, b, e, r, seed));
                res.scaling.push_back({p, s, rep});
                csv << p << "," << s << "," << rep.n << "," << fmt(rep.query.p50) << "," << fmt(rep.query.p95) << ","
                    << fmt(rep.query.p99) << "," << fmt(rep.capture.p95) << "\n";
            }
        write_file(out / "scaling.csv", csv.str(), files);
    }
    write_manifest(out, "serve-sim", cfg, files);
    return res;
}

BatchComparison cmd_batch_compare(const ExperimentConfig& cfg, const fs::path& out, bool force) {
    prepare_output_dir(out, force);
    auto zoo = build_zoo(cfg, 0);
    auto b = serve_selector(cfg, zoo);
    auto cmp = batch_comparison(zoo, b, serving_executor(cfg), cfg.serve.runtime, cfg.serve.batch,
                                derive_seed(cfg.seed, "serve"));
    std::vector<fs::path> files;
    write_file(out / "timelines.csv", timelines_csv(cmp), files);
    ojson summary{{"selector", b.to_string()},
                  {"window_s", cfg.serve.runtime.window_s},
                  {"batch_period_s", cfg.serve.batch.batch_period_s},
                  {"online_spike_s", cmp.online_spike_s},
                  {"batch_spike_s", cmp.batch_spike_s},
                  {"ratio", jnum(cmp.ratio())}};
    write_file(out / "batch_summary.json", summary.dump(2) + "\n", files);
    write_manifest(out, "batch-compare", cfg, files);
    return cmp;
}

std::vector<double> trailing_mean(const std::vector<double>& v, std::size_t window) {
    if (window < 1) throw InvalidArgument("trailing_mean: window must be >= 1");
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        std::size_t lo = i + 1 >= window ? i + 1 - window : 0;
        out[i] = std::accumulate(v.begin() + static_cast<std::ptrdiff_t>(lo), v.begin() + static_cast<std::ptrdiff_t>(i) + 1,
                                 0.0) /
                 static_cast<double>(i + 1 - lo);
    }
    return out;
}

namespace {

double safe_r2(const std::vector<double>& pred, const std::vector<double>& actual) {
    try {
        return r2(pred, actual);
    } catch (const std::exception&) {
        return std::nan("");
    }
}

}  // namespace

std::vector<SurrogateRow> cmd_surrogate_report(const ExperimentConfig& cfg, const fs::path& out, bool force) {
    if (std::find(cfg.methods.begin(), cfg.methods.end(), "HOLMES") == cfg.methods.end())
        throw ConfigError("config.methods: surrogate-report needs HOLMES enabled");
    prepare_output_dir(out, force);
    const double L = cfg.latency_budget_s;
    const int wanted = cfg.surrogate_report.probes;
    std::vector<SurrogateRow> rows;

    for (int r = 0; r < cfg.repeats; ++r) {
        auto inst = build_instance(cfg, r, L);
        const auto& prof = inst->profiler;
        const std::size_t n = inst->zoo.size();
        SearchParams sp = cfg.search;
        sp.seed = method_seed(cfg, "HOLMES", r);

        std::vector<Selector> seeds;
        for (auto&& res : {baseline_rd(prof, L, sp, method_seed(cfg, "RD", r)), baseline_af(prof, L, sp),
                           baseline_lf(prof, L, sp)})
            if (!res.best.empty_ensemble() && std::find(seeds.begin(), seeds.end(), res.best) == seeds.end())
                seeds.push_back(res.best);

        // Probe set: truly profiled selectors that the reported run never trains on.
        std::unordered_set<Selector, SelectorHash> held_out;
        std::vector<ProfileRecord> probes;
        auto take = [&](const ProfileRecord& rec) {
            if (static_cast<int>(probes.size()) >= wanted) return;
            if (std::find(seeds.begin(), seeds.end(), rec.b) != seeds.end()) return;
            if (held_out.insert(rec.b).second) probes.push_back(rec);
        };
        if (cfg.surrogate_report.probe_source == "explored") {
            // Selectors explored by an independent search (own seed) on the same instance.
            SearchParams pilot = sp;
            pilot.seed = method_seed(cfg, "PROBE", r);
            for (const auto& rec : smbo_search(prof, L, pilot, seeds).profiled) take(rec);
        } else {
            Rng rng(method_seed(cfg, "PROBE", r));
            std::size_t attempts = 0;
            while (static_cast<int>(probes.size()) < wanted && attempts++ < 100000) {
                Selector b(n);
                std::size_t k = 1 + uniform_index(rng, n);
                while (b.popcount() < k) b.set(uniform_index(rng, n));
                take(prof.profile(b));
            }
        }
        std::string note;
        if (static_cast<int>(probes.size()) < wanted)
            note = "warning: only " + std::to_string(probes.size()) + " of " + std::to_string(wanted) +
                   " probes available";

        SearchHooks hooks;
        hooks.exclude = &held_out;
        hooks.on_fit = [&](const SurrogateSnapshot& s) {
            std::vector<double> pa, aa, pl, al;
            for (const auto& p : probes) {
                pa.push_back(s.accuracy->predict(p.b));
                aa.push_back(p.accuracy);
                if (std::isfinite(p.latency_s)) {
                    pl.push_back(s.latency->predict(p.b));
                    al.push_back(p.latency_s);
                }
            }
            rows.push_back({r, s.iter, s.train_size, safe_r2(pa, aa), safe_r2(pl, al), note});
        };
        smbo_search(prof, L, sp, seeds, hooks);
    }

    std::ostringstream csv;
    csv << "repeat,iter,train_size,r2_accuracy,r2_latency,note\n";
    for (const auto& row : rows)
        csv << row.repeat << "," << row.iter << "," << row.train_size << "," << fmt(row.r2_accuracy) << ","
            << fmt(row.r2_latency) << "," << row.note << "\n";
    std::vector<fs::path> files;
    write_file(out / "surrogate_r2.csv", csv.str(), files);
    write_manifest(out, "surrogate-report", cfg, files);
    return rows;
}

}  // namespace holmes
