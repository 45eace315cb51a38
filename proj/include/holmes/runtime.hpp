#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "holmes/latency.hpp"
#include "holmes/selector.hpp"
#include "holmes/zoo.hpp"

namespace holmes {

struct SensorSample {
    int patient_id = 0;
    std::string modality;
    double t_gen = 0.0;
    double value = 0.0;
};

struct WindowBatch {
    int patient_id = 0;
    std::string modality;
    std::int64_t window_index = 0;
    double window_start_s = 0.0;
    std::vector<double> samples;
    double t_flush = 0.0;  // generation time of the window's last sample
};

struct QueryTrace {
    std::int64_t query_id = 0;
    int patient_id = 0;
    std::int64_t window_index = 0;
    bool label = false;
    double t_ingest = 0.0;   // last sample of the window captured
    double t_enqueue = 0.0;  // aggregation finished, query queued
    double t_dequeue = 0.0;  // taken by a slot
    double t_done = 0.0;
    std::vector<double> per_model_score;  // selected models, in zoo order
    double ensemble_score = 0.0;
};

struct RuntimeConfig {
    int patients = 1;
    std::map<std::string, double> rates{{"ECG-I", 250.0}};  // modality -> samples per second
    double window_s = 30.0;
    double duration_s = 60.0;           // of streamed data per patient
    double aggregation_cost_s = 0.005;  // aggregator bookkeeping before a query is queued
    double correlation = 0.3;           // binormal score model for synthetic per-window scores
    double positive_rate = 0.5;         // per-window label prevalence
    bool stagger_patients = true;       // patient streams start at a seeded offset in [0, window_s)

    void validate() const;
    std::int64_t samples_per_window(const std::string& modality) const;
};

// Per-(patient, modality) buffer: collects exactly one window of samples, then flushes.
class Aggregator {
public:
    Aggregator(int patient_id, std::string modality, std::int64_t samples_per_window);
    // Appends a sample; returns the flushed window when it completes one.
    std::optional<WindowBatch> push(const SensorSample& s);
    std::int64_t total_samples() const { return total_; }
    std::int64_t windows_flushed() const { return flushed_; }

private:
    int patient_id_;
    std::string modality_;
    std::int64_t per_window_;
    std::vector<double> buffer_;
    double buffer_start_ = 0.0;
    std::int64_t total_ = 0;
    std::int64_t flushed_ = 0;
};

// Offset of patient p's streams (same for every modality of that patient).
double patient_stream_start(const RuntimeConfig& cfg, int patient, std::uint64_t seed);

// Deterministic discrete-event simulation of ingest, aggregation, queueing and the slot pool.
// Throws ConfigError when a selected model's modality has no configured stream.
std::vector<QueryTrace> run_simulation(const ModelZoo& zoo, const Selector& b, const ExecutorModel& exec,
                                       const RuntimeConfig& cfg, std::uint64_t seed);

struct Percentiles {
    double p50 = 0.0;
    double p95 = 0.0;
    double p99 = 0.0;
};

struct E2EReport {
    Percentiles query;    // t_done - t_enqueue
    Percentiles capture;  // t_done - t_ingest
    std::size_t n = 0;
};

E2EReport e2e_percentiles(const std::vector<QueryTrace>& traces);

// Per-query pre-slot wait, t_dequeue - t_enqueue.
std::vector<double> queueing_delays(const std::vector<QueryTrace>& traces);

struct TimelinePoint {
    double t_s = 0.0;
    double latency_s = 0.0;
    bool inference = false;  // false: aggregation-only point
};

struct BatchComparison {
    std::vector<TimelinePoint> online;
    std::vector<TimelinePoint> batch;
    double online_spike_s = 0.0;  // largest online inference latency
    double batch_spike_s = 0.0;   // largest batch processing latency
    double ratio() const { return online_spike_s > 0.0 ? batch_spike_s / online_spike_s : kInfinity; }
};

struct BatchOptions {
    double batch_period_s = 3600.0;
    double sample_interval_s = 1.0;  // spacing of aggregation-only online points
};

// Online: one inference point per window query plus aggregation-only points between them.
// Batch: at every period boundary the windows flushed during the period are processed one after
// another on a single slot; the point's latency is the time until the last of them finishes.
// The simulated duration is raised to one batch period when shorter.
BatchComparison batch_comparison(const ModelZoo& zoo, const Selector& b, const ExecutorModel& exec,
                                 const RuntimeConfig& cfg, const BatchOptions& opts, std::uint64_t seed);

std::string trace_to_jsonl(const QueryTrace& t);
void write_traces_jsonl(const std::vector<QueryTrace>& traces, std::ostream& out);
std::string e2e_report_json(const E2EReport& r);
// CSV `timeline,t_s,latency_s,kind`.
std::string timelines_csv(const BatchComparison& c);

// Wall-clock mode: per-patient producer threads own their aggregators and enqueue window queries
// into a shared MPMC queue served by exec.n_slots worker threads that sleep for the service time.
// Simulated seconds are scaled by time_scale (0.01 runs 100x faster than real time). Times in the
// returned traces are measured, so they are not reproducible.
std::vector<QueryTrace> run_wallclock(const ModelZoo& zoo, const Selector& b, const ExecutorModel& exec,
                                      const RuntimeConfig& cfg, std::uint64_t seed, double time_scale);

// Newline-delimited JSON SensorSample records: {"patient_id":..,"modality":..,"t_gen":..,"value":..}.
SensorSample parse_sensor_sample(const std::string& line);

// Routes samples into per-(patient, modality) aggregators and emits one callback per flushed window.
class IngestRouter {
public:
    IngestRouter(RuntimeConfig cfg, std::function<void(const WindowBatch&)> on_window);
    void push(const SensorSample& s);
    // Reads NDJSON records until EOF; returns the number of samples accepted.
    std::size_t consume(std::istream& in);

private:
    RuntimeConfig cfg_;
    std::function<void(const WindowBatch&)> on_window_;
    std::map<std::pair<int, std::string>, Aggregator> aggregators_;
    std::map<std::pair<int, std::string>, double> last_t_;
};

// Loopback TCP listener feeding an IngestRouter, one connection at a time, on a background thread.
class TcpIngestServer {
public:
    // port 0 picks an ephemeral port.
    TcpIngestServer(IngestRouter& router, std::uint16_t port = 0);
    ~TcpIngestServer();
    TcpIngestServer(const TcpIngestServer&) = delete;
    TcpIngestServer& operator=(const TcpIngestServer&) = delete;

    std::uint16_t port() const { return port_; }
    void stop();
    std::size_t samples_received() const;
    std::vector<std::string> errors() const;

private:
    struct State;
    std::unique_ptr<State> state_;
    std::uint16_t port_ = 0;
};

}  // namespace holmes
