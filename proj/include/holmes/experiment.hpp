#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "holmes/cohort.hpp"
#include "holmes/composer.hpp"
#include "holmes/latency.hpp"
#include "holmes/profiler.hpp"
#include "holmes/runtime.hpp"
#include "holmes/zoo.hpp"

namespace holmes {

inline constexpr int kOutputLayoutVersion = 1;

struct ZooSpec {
    int leads = 3;
    std::vector<int> filters{8, 16, 32, 64, 128};
    std::vector<int> blocks{2, 4, 8, 16};
    ZooGenOptions gen;
    std::optional<std::string> path;  // load this zoo file instead of generating
};

struct CohortSpec {
    std::size_t n_pos = 10000;
    std::size_t n_neg = 10000;
    double correlation = 0.3;
};

struct ServeSpec {
    RuntimeConfig runtime;
    std::optional<ExecutorModel> executor;  // defaults to the experiment executor with system.slots
    std::string selector;                   // bit string; empty: use `models`, else model 0
    std::vector<std::string> models;        // model ids
    std::string mode = "des";               // des | wallclock
    double time_scale = 0.01;               // wallclock only
    std::vector<int> patients_sweep;
    std::vector<int> slots_sweep;
    BatchOptions batch;
};

struct SurrogateReportSpec {
    int probes = 100;
    std::string probe_source = "explored";  // explored | random
};

struct ExperimentConfig {
    std::uint64_t seed = 0;
    std::string output_dir = "out";
    int repeats = 20;
    std::vector<std::string> methods{"RD", "AF", "LF", "NPO", "HOLMES"};
    double latency_budget_s = 0.2;
    std::vector<double> latency_budgets_s{0.1, 0.2, 0.3};
    bool vary_instance = true;  // each repeat draws its own zoo noise and cohort

    ZooSpec zoo;
    CohortSpec cohort;
    SystemConfig system;
    ExecutorModel executor;
    SearchParams search;
    LatencyProfileOptions latency;
    SurrogateReportSpec surrogate_report;
    ServeSpec serve;

    void validate() const;
};

// Parses a config object; unknown or mistyped fields raise ConfigError naming the field path.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

// One problem instance (zoo, cohort, profiler) for repeat r.
struct Instance {
    ModelZoo zoo;
    Cohort cohort;
    SimulatedProfiler profiler;
    Instance(const ExperimentConfig& cfg, ModelZoo z, Cohort c, std::uint64_t latency_seed, double budget);
};

std::uint64_t instance_seed(const ExperimentConfig& cfg, int repeat);
std::uint64_t method_seed(const ExperimentConfig& cfg, const std::string& method, int repeat);
ModelZoo build_zoo(const ExperimentConfig& cfg, int repeat);
std::unique_ptr<Instance> build_instance(const ExperimentConfig& cfg, int repeat, double budget);

// One method's outcome on one instance.
struct MethodRun {
    std::string method;
    int repeat = 0;
    double budget = 0.0;
    SearchResult result;
    AccuracyReport report;      // of result.best; chance-level (constant scores) when empty
    double latency_s = kInfinity;
    bool empty = true;
    bool seed_feasible = false;  // some RD/AF/LF seed met the budget
};

// Runs the configured methods on one instance. RD/AF/LF are always computed as warm-start seeds.
std::vector<MethodRun> run_methods(const ExperimentConfig& cfg, Instance& inst, int repeat, double budget,
                                   const SearchHooks& holmes_hooks = {});

struct ComposeOutcome {
    std::vector<MethodRun> runs;
    std::vector<std::filesystem::path> files;
};

// Refuses to write into a non-empty directory unless force is set.
void prepare_output_dir(const std::filesystem::path& dir, bool force);

void cmd_zoo_generate(const ExperimentConfig& cfg, const std::filesystem::path& out, bool force);
ComposeOutcome cmd_compose(const ExperimentConfig& cfg, const std::filesystem::path& out, bool force);
ComposeOutcome cmd_latency_sweep(const ExperimentConfig& cfg, const std::filesystem::path& out, bool force);

struct ScalingRow {
    int patients = 0;
    int slots = 0;
    E2EReport report;
};
struct ServeOutcome {
    E2EReport report;
    std::vector<ScalingRow> scaling;
};
ServeOutcome cmd_serve_sim(const ExperimentConfig& cfg, const std::filesystem::path& out, bool force);
BatchComparison cmd_batch_compare(const ExperimentConfig& cfg, const std::filesystem::path& out, bool force);

struct SurrogateRow {
    int repeat = 0;
    int iter = 0;
    std::size_t train_size = 0;
    double r2_accuracy = 0.0;
    double r2_latency = 0.0;
    std::string note;
};
std::vector<SurrogateRow> cmd_surrogate_report(const ExperimentConfig& cfg, const std::filesystem::path& out,
                                               bool force);

// Selector for serve-sim / batch-compare from the serve spec.
Selector serve_selector(const ExperimentConfig& cfg, const ModelZoo& zoo);

// Trailing mean over up to `window` values ending at each index.
std::vector<double> trailing_mean(const std::vector<double>& v, std::size_t window);

}  // namespace holmes
