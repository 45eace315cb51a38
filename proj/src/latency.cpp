#include "holmes/latency.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <queue>
#include <sstream>

#include <json.hpp>

#include "holmes/errors.hpp"
#include "holmes/rng.hpp"

namespace holmes {

void ExecutorModel::validate() const {
    if (n_slots < 1) throw InvalidArgument("executor: n_slots must be >= 1");
    if (!(per_mac_seconds > 0.0)) throw InvalidArgument("executor: per_mac_seconds must be positive");
    if (!(fixed_overhead_s >= 0.0)) throw InvalidArgument("executor: fixed_overhead_s must be non-negative");
    if (batch_size < 1) throw InvalidArgument("executor: batch_size must be >= 1");
}

void SystemConfig::validate() const {
    if (slots < 1) throw InvalidArgument("system: slots must be >= 1");
    if (patients < 1) throw InvalidArgument("system: patients must be >= 1");
    if (!(per_patient_rate_qps > 0.0)) throw InvalidArgument("system: per_patient_rate_qps must be positive");
    if (!(latency_budget_s >= 0.0)) throw InvalidArgument("system: latency_budget_s must be non-negative");
}

double service_time(const Selector& b, const ModelZoo& zoo, const ExecutorModel& exec, int batch) {
    require_length(b, zoo.size(), "service_time");
    if (b.empty_ensemble()) throw EmptyEnsembleError();
    double compute = zoo.selected_macs(b) * exec.per_mac_seconds;
    return exec.fixed_overhead_s + compute * std::max(batch, 1);
}

std::vector<PoolTiming> simulate_pool(std::span<const double> arrivals, double per_query_service,
                                      double per_query_marginal, const ExecutorModel& exec) {
    exec.validate();
    std::priority_queue<double, std::vector<double>, std::greater<>> free_at;
    for (int s = 0; s < exec.n_slots; ++s) free_at.push(0.0);

    std::vector<PoolTiming> out(arrivals.size());
    std::size_t i = 0;
    while (i < arrivals.size()) {
        if (i > 0 && arrivals[i] < arrivals[i - 1]) throw InvalidArgument("simulate_pool: arrivals must be sorted");
        double f = free_at.top();
        free_at.pop();
        double start = std::max(f, arrivals[i]);
        std::size_t j = i;
        while (j < arrivals.size() && j - i < static_cast<std::size_t>(exec.batch_size) && arrivals[j] <= start) ++j;
        double done = start + per_query_service + static_cast<double>(j - i - 1) * per_query_marginal;
        for (std::size_t k = i; k < j; ++k) out[k] = {arrivals[k], start, done};
        free_at.push(done);
        i = j;
    }
    return out;
}

double measure_capacity(const Selector& b, const ModelZoo& zoo, const ExecutorModel& exec, int n_queries) {
    if (n_queries < 100) throw InvalidArgument("measure_capacity: n_queries must be >= 100");
    double svc = service_time(b, zoo, exec);
    double marginal = svc - exec.fixed_overhead_s;
    std::vector<double> arrivals(static_cast<std::size_t>(n_queries), 0.0);
    auto timing = simulate_pool(arrivals, svc, marginal, exec);
    double makespan = 0.0;
    for (const auto& t : timing) makespan = std::max(makespan, t.done);
    return static_cast<double>(n_queries) / makespan;
}

double nearest_rank_percentile(std::vector<double> values, double q) {
    if (values.empty()) throw InvalidArgument("percentile: empty sample");
    if (!(q > 0.0 && q <= 100.0)) throw InvalidArgument("percentile: q must lie in (0, 100]");
    auto rank = static_cast<std::size_t>(std::ceil(q / 100.0 * static_cast<double>(values.size())));
    rank = std::clamp<std::size_t>(rank, 1, values.size());
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(rank - 1), values.end());
    return values[rank - 1];
}

double measure_ts(const Selector& b, const ModelZoo& zoo, const ExecutorModel& exec, double ingest_rate_qps,
                  const TsOptions& opts) {
    if (!(ingest_rate_qps > 0.0)) throw InvalidArgument("measure_ts: ingest rate must be positive");
    double mu = measure_capacity(b, zoo, exec);
    // relative slack: mu comes from a summed makespan and can land a few ulps under the exact rate
    if (ingest_rate_qps > mu * (1.0 + 1e-9)) {
        std::ostringstream msg;
        msg << "measure_ts: ingest rate " << ingest_rate_qps << " qps exceeds capacity " << mu << " qps";
        throw OverloadError(msg.str());
    }
    const double period = 1.0 / ingest_rate_qps;
    auto n = static_cast<std::size_t>(std::max<double>(opts.min_queries, std::ceil(opts.duration_s * ingest_rate_qps)));
    std::vector<double> arrivals(n);
    for (std::size_t i = 0; i < n; ++i) arrivals[i] = static_cast<double>(i) * period;
    if (opts.mode == ArrivalMode::jittered) {
        Rng rng(derive_seed(opts.seed, "ts.jitter"));
        std::uniform_real_distribution<double> jitter(-0.5 * opts.jitter_fraction * period,
                                                      0.5 * opts.jitter_fraction * period);
        for (auto& a : arrivals) a = std::max(0.0, a + jitter(rng));
        std::sort(arrivals.begin(), arrivals.end());
    }
    double svc = service_time(b, zoo, exec);
    auto timing = simulate_pool(arrivals, svc, svc - exec.fixed_overhead_s, exec);
    std::vector<double> sojourn(n);
    for (std::size_t i = 0; i < n; ++i) sojourn[i] = timing[i].done - timing[i].arrival;
    return nearest_rank_percentile(std::move(sojourn), 95.0);
}

double ArrivalCurve::alpha(double dt) const {
    if (dt < 0.0) return 0.0;
    auto it = std::upper_bound(steps_.begin(), steps_.end(), dt, [](double v, const Step& s) { return v < s.dt; });
    if (it == steps_.begin()) return 0.0;
    return std::prev(it)->count;
}

ArrivalCurve build_arrival_curve(std::span<const double> ts, std::optional<double> stop_rate) {
    if (!std::is_sorted(ts.begin(), ts.end())) throw InvalidArgument("build_arrival_curve: timestamps must be sorted");
    if (stop_rate && !(*stop_rate > 0.0)) throw InvalidArgument("build_arrival_curve: stop rate must be positive");
    ArrivalCurve curve;
    const std::size_t n = ts.size();
    curve.n_queries_ = n;
    if (n == 0) return curve;
    double span = ts.back() - ts.front();
    curve.long_run_rate_ = span > 0.0 ? static_cast<double>(n - 1) / span : 0.0;

    // w_k: shortest window holding k queries. Non-decreasing and superadditive in k, so once
    // k / rate - w_k < 0 no larger k can raise the deviation against that rate.
    for (std::size_t k = 1; k <= n; ++k) {
        double w = kInfinity;
        for (std::size_t i = 0; i + k - 1 < n; ++i) w = std::min(w, ts[i + k - 1] - ts[i]);
        auto count = static_cast<double>(k);
        if (!curve.steps_.empty() && curve.steps_.back().dt == w)
            curve.steps_.back().count = count;
        else
            curve.steps_.push_back({w, count});
        if (stop_rate && k < n && count / *stop_rate - w < 0.0) {
            curve.truncation_rate_ = stop_rate;
            break;
        }
    }
    return curve;
}

double horizontal_deviation(const ArrivalCurve& alpha, const ServiceCurve& beta) {
    if (!(beta.rate > 0.0)) throw InvalidArgument("horizontal_deviation: service rate must be positive");
    if (alpha.steps().empty()) return 0.0;
    if (beta.rate < alpha.long_run_rate()) {
        std::ostringstream msg;
        msg << "horizontal_deviation: service rate " << beta.rate << " qps is below long-run arrival rate "
            << alpha.long_run_rate() << " qps";
        throw DivergenceError(msg.str());
    }
    if (auto tr = alpha.truncation_rate(); tr && beta.rate < *tr)
        throw InvalidArgument("horizontal_deviation: arrival curve was truncated for a faster service rate");
    // alpha is constant on each step, so the sup on [dt_k, dt_{k+1}) sits at the left end.
    double d = 0.0;
    for (const auto& s : alpha.steps()) d = std::max(d, beta.latency_offset_s + s.count / beta.rate - s.dt);
    return d;
}

double horizontal_deviation(const AffineArrivalCurve& alpha, const ServiceCurve& beta) {
    if (!(beta.rate > 0.0)) throw InvalidArgument("horizontal_deviation: service rate must be positive");
    if (alpha.rate > beta.rate) {
        std::ostringstream msg;
        msg << "horizontal_deviation: service rate " << beta.rate << " qps is below arrival rate " << alpha.rate
            << " qps";
        throw DivergenceError(msg.str());
    }
    return beta.latency_offset_s + std::max(alpha.burst, 0.0) / beta.rate;
}

double patient_phase(std::uint64_t seed, int patient) {
    Rng rng(derive_seed(seed, "runtime.stagger", static_cast<std::uint64_t>(patient)));
    return uniform01(rng);
}

std::vector<double> query_arrival_trace(int patients, double rate, double duration_s, std::uint64_t seed) {
    if (patients < 0 || !(rate > 0.0) || !(duration_s >= 0.0))
        throw InvalidArgument("query_arrival_trace: bad arguments");
    const double period = 1.0 / rate;
    std::vector<double> out;
    for (int p = 0; p < patients; ++p) {
        double phase = patient_phase(seed, p) * period;
        for (std::size_t k = 0;; ++k) {
            double t = phase + static_cast<double>(k) * period;
            if (t >= duration_s) break;
            out.push_back(t);
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

LatencyReport latency_profile(const Selector& b, const ModelZoo& zoo, const ExecutorModel& exec,
                              const SystemConfig& sys, std::uint64_t seed, const LatencyProfileOptions& opts) {
    sys.validate();
    ExecutorModel ex = exec;
    ex.n_slots = sys.slots;
    ex.validate();

    LatencyReport r;
    r.capacity_qps = measure_capacity(b, zoo, ex, opts.capacity_queries);
    const double lambda = sys.ingest_rate();
    auto infeasible = [&](std::string why) {
        r.feasible = false;
        r.note = std::move(why);
        r.t_hat = kInfinity;
        return r;
    };
    try {
        TsOptions ts;
        ts.duration_s = opts.ts_duration_s;
        r.t_s_p95 = measure_ts(b, zoo, ex, lambda, ts);
    } catch (const OverloadError& e) {
        r.t_s_p95 = kInfinity;
        r.t_q_bound = kInfinity;
        return infeasible(e.what());
    }
    double trace_s = std::max(opts.trace_s, 2.0 / sys.per_patient_rate_qps);
    auto trace = query_arrival_trace(sys.patients, sys.per_patient_rate_qps, trace_s, seed);
    auto alpha = build_arrival_curve(trace, r.capacity_qps);
    ServiceCurve beta{r.capacity_qps, service_time(b, zoo, ex)};
    try {
        r.t_q_bound = horizontal_deviation(alpha, beta);
    } catch (const DivergenceError& e) {
        r.t_q_bound = kInfinity;
        return infeasible(e.what());
    }
    r.t_hat = r.t_s_p95 + r.t_q_bound;
    return r;
}

std::string latency_report_json(const LatencyReport& r) {
    auto num = [](double v) -> nlohmann::ordered_json {
        if (std::isfinite(v)) return v;
        return nullptr;
    };
    nlohmann::ordered_json j;
    j["t_s_p95"] = num(r.t_s_p95);
    j["t_q_bound"] = num(r.t_q_bound);
    j["t_hat"] = num(r.t_hat);
    j["capacity_qps"] = num(r.capacity_qps);
    j["feasible"] = r.feasible;
    if (!r.note.empty()) j["note"] = r.note;
    return j.dump(2) + "\n";
}

void write_curves_csv(const ArrivalCurve& alpha, const ServiceCurve& beta, double horizon_s, double granularity_s,
                      const std::filesystem::path& path) {
    if (!(granularity_s > 0.0) || !(horizon_s >= 0.0)) throw InvalidArgument("write_curves_csv: bad grid");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidArgument("write_curves_csv: cannot open '" + path.string() + "'");
    out << "dt_s,alpha,beta\n";
    out.precision(12);
    auto steps = static_cast<std::size_t>(std::floor(horizon_s / granularity_s + 1e-9));
    for (std::size_t i = 0; i <= steps; ++i) {
        double dt = static_cast<double>(i) * granularity_s;
        out << dt << "," << alpha.alpha(dt) << "," << beta.beta(dt) << "\n";
    }
}

}  // namespace holmes
