#include "holmes/profiler.hpp"

#include "holmes/errors.hpp"

namespace holmes {

AccuracyReport EnsembleProfiler::report(const Selector& b) const {
    AccuracyReport r;
    r.roc_auc = profile(b).accuracy;
    return r;
}

SimulatedProfiler::SimulatedProfiler(const ModelZoo& zoo, const Cohort& cohort, ExecutorModel exec, SystemConfig sys,
                                     std::uint64_t seed, LatencyProfileOptions opts)
    : zoo_(zoo), cohort_(cohort), exec_(exec), sys_(sys), seed_(seed), opts_(opts) {
    if (cohort_.n_models() != zoo_.size()) throw InvalidArgument("SimulatedProfiler: cohort/zoo size mismatch");
    exec_.validate();
    sys_.validate();
}

LatencyReport SimulatedProfiler::latency(const Selector& b) const {
    return latency_profile(b, zoo_, exec_, sys_, seed_, opts_);
}

ProfileRecord SimulatedProfiler::profile(const Selector& b) const {
    require_length(b, zoo_.size(), "profile");
    if (b.empty_ensemble()) throw EmptyEnsembleError();
    {
        std::lock_guard lock(mu_);
        if (auto it = cache_.find(b); it != cache_.end()) return it->second;
    }
    ProfileRecord rec{b, ensemble_roc_auc(cohort_, b), latency(b).t_hat};
    std::lock_guard lock(mu_);
    cache_.emplace(b, rec);
    return rec;
}

AccuracyReport SimulatedProfiler::report(const Selector& b) const { return accuracy_profile(cohort_, b); }

}  // namespace holmes
