#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "holmes/selector.hpp"
#include "holmes/zoo.hpp"

namespace holmes {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

// Deterministic analytic executor: each of n_slots serves one batch at a time.
struct ExecutorModel {
    int n_slots = 2;
    double per_mac_seconds = 4e-9;
    double fixed_overhead_s = 1e-3;
    int batch_size = 1;

    void validate() const;
};

// The composer's system configuration vector c plus the latency budget.
struct SystemConfig {
    int slots = 2;
    int patients = 64;
    double per_patient_rate_qps = 1.0 / 30.0;  // ensemble queries per patient per second
    double latency_budget_s = 0.2;

    double ingest_rate() const { return patients * per_patient_rate_qps; }
    void validate() const;
};

// fixed_overhead + (sum of selected MACs) * per_mac_seconds, for a batch of `batch` queries
// (overhead paid once per batch). Throws EmptyEnsembleError on an all-zero selector.
double service_time(const Selector& b, const ModelZoo& zoo, const ExecutorModel& exec, int batch = 1);

// Per-query timing from a FIFO pool simulation.
struct PoolTiming {
    double arrival = 0.0;
    double start = 0.0;
    double done = 0.0;
};

// FIFO queue feeding exec.n_slots identical slots; a freed slot takes up to batch_size waiting queries.
// `arrivals` must be sorted. per_query_service is the batch-of-one service time.
std::vector<PoolTiming> simulate_pool(std::span<const double> arrivals, double per_query_service,
                                      double per_query_marginal, const ExecutorModel& exec);

// Closed-loop throughput: n_queries all ready at t = 0, mu = n_queries / makespan.
double measure_capacity(const Selector& b, const ModelZoo& zoo, const ExecutorModel& exec, int n_queries = 1000);

enum class ArrivalMode { deterministic, jittered };

struct TsOptions {
    double duration_s = 10.0;
    int min_queries = 100;
    ArrivalMode mode = ArrivalMode::deterministic;
    double jitter_fraction = 0.5;  // jittered: uniform offset in +/- fraction/2 of the period
    std::uint64_t seed = 0;
};

// Open-loop p95 of (done - arrival) at ingest rate lambda. Throws OverloadError when lambda > mu.
double measure_ts(const Selector& b, const ModelZoo& zoo, const ExecutorModel& exec, double ingest_rate_qps,
                  const TsOptions& opts = {});

// Empirical arrival curve: alpha(dt) = most queries seen in any closed window of length dt.
// Stored as steps (dt_k, count_k): alpha is count_k on [dt_k, dt_{k+1}).
class ArrivalCurve {
public:
    struct Step {
        double dt = 0.0;
        double count = 0.0;
    };

    std::span<const Step> steps() const { return steps_; }
    double alpha(double dt) const;
    double long_run_rate() const { return long_run_rate_; }
    // When set, steps stop early: the curve was cut once a window of k queries outlasted k / rate,
    // which is enough to bound the deviation against any service rate >= this one.
    std::optional<double> truncation_rate() const { return truncation_rate_; }
    std::size_t n_queries() const { return n_queries_; }

private:
    friend ArrivalCurve build_arrival_curve(std::span<const double>, std::optional<double>);
    std::vector<Step> steps_;
    double long_run_rate_ = 0.0;
    std::optional<double> truncation_rate_;
    std::size_t n_queries_ = 0;
};

// Sliding two-index scan over every pairwise gap. Throws InvalidArgument on unsorted input.
ArrivalCurve build_arrival_curve(std::span<const double> timestamps, std::optional<double> stop_rate = std::nullopt);

// Rate-latency service curve beta(dt) = rate * max(0, dt - latency_offset_s).
struct ServiceCurve {
    double rate = 1.0;
    double latency_offset_s = 0.0;

    double beta(double dt) const { return dt <= latency_offset_s ? 0.0 : rate * (dt - latency_offset_s); }
};

// Token-bucket (affine) arrival curve alpha(dt) = burst + rate * dt.
struct AffineArrivalCurve {
    double burst = 0.0;
    double rate = 0.0;
};

// sup_t inf{d >= 0 : alpha(t) <= beta(t + d)}. Throws DivergenceError when the service rate is below the
// long-run arrival rate.
double horizontal_deviation(const ArrivalCurve& alpha, const ServiceCurve& beta);
double horizontal_deviation(const AffineArrivalCurve& alpha, const ServiceCurve& beta);

// Patient p's stream phase as a fraction of its period, in [0, 1). Shared by the profiler's trace and
// the runtime so both see the same stagger for the same seed.
double patient_phase(std::uint64_t seed, int patient);

// Merged query arrival times of `patients` periodic sources at per_patient_rate, each with a seeded
// phase in [0, 1/rate). Patient p's phase does not depend on the patient count.
std::vector<double> query_arrival_trace(int patients, double per_patient_rate_qps, double duration_s,
                                        std::uint64_t seed);

struct LatencyReport {
    double t_s_p95 = 0.0;
    double t_q_bound = 0.0;
    double t_hat = 0.0;
    double capacity_qps = 0.0;
    bool feasible = true;
    std::string note;  // set when infeasible (overload / divergence)
};

struct LatencyProfileOptions {
    double trace_s = 10.0;        // arrival-curve profiling trace length (extended to two periods)
    double ts_duration_s = 10.0;
    int capacity_queries = 1000;
};

// f_l: T_hat = p95 serving latency + network-calculus queueing bound, using sys.slots slots.
// Overload or divergence yields an infeasible report with t_hat = +inf.
LatencyReport latency_profile(const Selector& b, const ModelZoo& zoo, const ExecutorModel& exec,
                              const SystemConfig& sys, std::uint64_t seed, const LatencyProfileOptions& opts = {});

std::string latency_report_json(const LatencyReport& r);

// CSV `dt_s,alpha,beta` sampled every granularity_s up to horizon_s.
void write_curves_csv(const ArrivalCurve& alpha, const ServiceCurve& beta, double horizon_s, double granularity_s,
                      const std::filesystem::path& path);

// Nearest-rank percentile (q in (0, 100]) of an unsorted sample. Throws InvalidArgument on empty input.
double nearest_rank_percentile(std::vector<double> values, double q);

}  // namespace holmes
