#pragma once

#include <cstdint>
#include <mutex>
#include <unordered_map>

#include "holmes/cohort.hpp"
#include "holmes/latency.hpp"
#include "holmes/selector.hpp"
#include "holmes/zoo.hpp"

namespace holmes {

// One truly profiled ensemble: f_a (ROC-AUC) and f_l (seconds, +inf when infeasible).
struct ProfileRecord {
    Selector b;
    double accuracy = 0.0;
    double latency_s = 0.0;
};

// The pair of true profilers (f_a, f_l) the composer queries. Implementations must be
// deterministic and safe to call concurrently.
class EnsembleProfiler {
public:
    virtual ~EnsembleProfiler() = default;
    virtual const ModelZoo& zoo() const = 0;
    virtual ProfileRecord profile(const Selector& b) const = 0;
    // Full metric set for reporting; defaults to ROC-AUC only.
    virtual AccuracyReport report(const Selector& b) const;
};

// f_a from a synthetic cohort, f_l from the analytic executor + network-calculus estimate.
// Results are memoized per selector; search code does its own call accounting.
class SimulatedProfiler final : public EnsembleProfiler {
public:
    SimulatedProfiler(const ModelZoo& zoo, const Cohort& cohort, ExecutorModel exec, SystemConfig sys,
                      std::uint64_t seed, LatencyProfileOptions opts = {});

    const ModelZoo& zoo() const override { return zoo_; }
    ProfileRecord profile(const Selector& b) const override;
    AccuracyReport report(const Selector& b) const override;
    LatencyReport latency(const Selector& b) const;

    const SystemConfig& system() const { return sys_; }
    const ExecutorModel& executor() const { return exec_; }

private:
    const ModelZoo& zoo_;
    const Cohort& cohort_;
    ExecutorModel exec_;
    SystemConfig sys_;
    std::uint64_t seed_;
    LatencyProfileOptions opts_;
    mutable std::mutex mu_;
    mutable std::unordered_map<Selector, ProfileRecord, SelectorHash> cache_;
};

}  // namespace holmes
