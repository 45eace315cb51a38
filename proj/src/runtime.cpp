#include "holmes/runtime.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <istream>
#include <mutex>
#include <numbers>
#include <ostream>
#include <queue>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "holmes/cohort.hpp"
#include "holmes/errors.hpp"
#include "holmes/rng.hpp"

namespace holmes {

void RuntimeConfig::validate() const {
    if (patients < 1) throw ConfigError("runtime.patients must be >= 1");
    if (rates.empty()) throw ConfigError("runtime.rates must configure at least one modality");
    if (!(window_s > 0.0)) throw ConfigError("runtime.window_s must be > 0");
    if (!(duration_s >= window_s)) throw ConfigError("runtime.duration_s must be >= window_s");
    if (!(aggregation_cost_s >= 0.0)) throw ConfigError("runtime.aggregation_cost_s must be >= 0");
    if (!(correlation >= 0.0 && correlation < 1.0)) throw ConfigError("runtime.correlation must lie in [0, 1)");
    if (!(positive_rate >= 0.0 && positive_rate <= 1.0)) throw ConfigError("runtime.positive_rate must lie in [0, 1]");
    for (const auto& [m, r] : rates) {
        if (!(r > 0.0)) throw ConfigError("runtime.rates." + m + " must be > 0");
        samples_per_window(m);
    }
}

std::int64_t RuntimeConfig::samples_per_window(const std::string& modality) const {
    auto it = rates.find(modality);
    if (it == rates.end()) throw ConfigError("runtime.rates has no stream for modality '" + modality + "'");
    double n = it->second * window_s;
    double rounded = std::round(n);
    if (rounded < 1.0 || std::abs(n - rounded) > 1e-9 * std::max(1.0, n)) {
        std::ostringstream msg;
        msg << "runtime.rates." << modality << ": rate x window = " << n << " is not a whole number of samples";
        throw ConfigError(msg.str());
    }
    return static_cast<std::int64_t>(rounded);
}

Aggregator::Aggregator(int patient_id, std::string modality, std::int64_t samples_per_window)
    : patient_id_(patient_id), modality_(std::move(modality)), per_window_(samples_per_window) {
    if (per_window_ < 1) throw InvalidArgument("Aggregator: samples_per_window must be >= 1");
    buffer_.reserve(static_cast<std::size_t>(per_window_));
}

std::optional<WindowBatch> Aggregator::push(const SensorSample& s) {
    if (s.patient_id != patient_id_ || s.modality != modality_)
        throw InvalidArgument("Aggregator: sample belongs to another stream");
    if (buffer_.empty()) buffer_start_ = s.t_gen;
    buffer_.push_back(s.value);
    ++total_;
    if (static_cast<std::int64_t>(buffer_.size()) < per_window_) return std::nullopt;
    WindowBatch w{patient_id_, modality_, flushed_++, buffer_start_, std::move(buffer_), s.t_gen};
    buffer_ = {};
    buffer_.reserve(static_cast<std::size_t>(per_window_));
    return w;
}

double patient_stream_start(const RuntimeConfig& cfg, int patient, std::uint64_t seed) {
    if (!cfg.stagger_patients) return 0.0;
    return patient_phase(seed, patient) * cfg.window_s;
}

namespace {

double waveform(double t) { return std::sin(2.0 * std::numbers::pi * 1.2 * t); }

void require_modalities(const ModelZoo& zoo, const Selector& b, const RuntimeConfig& cfg) {
    require_length(b, zoo.size(), "runtime");
    if (b.empty_ensemble()) throw EmptyEnsembleError();
    for (auto i : b.indices())
        if (!cfg.rates.count(zoo[i].modality))
            throw ConfigError("selected model '" + zoo[i].id + "' needs modality '" + zoo[i].modality +
                              "', which has no configured stream");
}

std::int64_t full_windows(const RuntimeConfig& cfg) {
    return static_cast<std::int64_t>(std::floor(cfg.duration_s / cfg.window_s + 1e-9));
}

// A query that left the aggregators, before it is served.
struct PendingQuery {
    int patient = 0;
    std::int64_t window = 0;
    double t_ingest = 0.0;
    double t_enqueue = 0.0;
};

// Synthetic model outputs for (patient, window), from the cohort's binormal generator.
struct WindowScorer {
    BinormalScorer scorer;
    std::vector<std::size_t> selected;
    double positive_rate;
    std::uint64_t seed;

    void fill(QueryTrace& q) const {
        Rng rng(derive_seed(derive_seed(seed, "runtime.patient", static_cast<std::uint64_t>(q.patient_id)),
                            "runtime.window", static_cast<std::uint64_t>(q.window_index)));
        q.label = uniform01(rng) < positive_rate;
        std::vector<double> row(scorer.n_models());
        scorer.draw(q.label, rng, row);
        q.per_model_score.clear();
        double sum = 0.0;
        for (auto j : selected) {
            q.per_model_score.push_back(row[j]);
            sum += row[j];
        }
        q.ensemble_score = sum / static_cast<double>(selected.size());
    }
};

// Event-driven ingest: one event per (patient, modality, window) delivering that window's samples
// through the stream's aggregator. A patient's query is released once every modality flushed the window.
std::vector<PendingQuery> ingest(const RuntimeConfig& cfg, std::uint64_t seed) {
    const std::int64_t windows = full_windows(cfg);
    std::vector<std::string> modalities;
    for (const auto& [m, r] : cfg.rates) modalities.push_back(m);

    struct Stream {
        int patient;
        std::size_t modality;
        double start;
        double rate;
        std::int64_t per_window;
        std::int64_t next_window = 0;
        Aggregator agg;
        double flush_time(std::int64_t w) const {
            return start + static_cast<double>((w + 1) * per_window - 1) / rate;
        }
    };
    std::vector<Stream> streams;
    for (int p = 0; p < cfg.patients; ++p) {
        double start = patient_stream_start(cfg, p, seed);
        for (std::size_t m = 0; m < modalities.size(); ++m) {
            auto n = cfg.samples_per_window(modalities[m]);
            streams.push_back({p, m, start, cfg.rates.at(modalities[m]), n, 0, Aggregator(p, modalities[m], n)});
        }
    }

    using Event = std::pair<double, std::size_t>;  // (flush time, stream index)
    std::priority_queue<Event, std::vector<Event>, std::greater<>> events;
    if (windows > 0)
        for (std::size_t s = 0; s < streams.size(); ++s) events.emplace(streams[s].flush_time(0), s);

    // (patient, window) -> flushed modality count and latest flush time
    std::map<std::pair<int, std::int64_t>, std::pair<std::size_t, double>> waiting;
    std::vector<PendingQuery> out;
    SensorSample sample;
    while (!events.empty()) {
        auto [t, si] = events.top();
        events.pop();
        Stream& st = streams[si];
        sample.patient_id = st.patient;
        sample.modality = modalities[st.modality];
        std::optional<WindowBatch> batch;
        const std::int64_t first = st.next_window * st.per_window;
        for (std::int64_t k = first; k < first + st.per_window; ++k) {
            sample.t_gen = st.start + static_cast<double>(k) / st.rate;
            sample.value = waveform(sample.t_gen);
            batch = st.agg.push(sample);
        }
        if (!batch) throw InvalidArgument("runtime: aggregator did not flush at a window boundary");
        auto& slot = waiting[{st.patient, batch->window_index}];
        slot.first += 1;
        slot.second = std::max(slot.second, batch->t_flush);
        if (slot.first == modalities.size()) {
            out.push_back({st.patient, batch->window_index, slot.second, slot.second + cfg.aggregation_cost_s});
            waiting.erase({st.patient, batch->window_index});
        }
        if (++st.next_window < windows) events.emplace(st.flush_time(st.next_window), si);
    }
    std::stable_sort(out.begin(), out.end(), [](const PendingQuery& a, const PendingQuery& b) {
        if (a.t_enqueue != b.t_enqueue) return a.t_enqueue < b.t_enqueue;
        return a.patient < b.patient;
    });
    return out;
}

}  // namespace

std::vector<QueryTrace> run_simulation(const ModelZoo& zoo, const Selector& b, const ExecutorModel& exec,
                                       const RuntimeConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    exec.validate();
    require_modalities(zoo, b, cfg);

    auto pending = ingest(cfg, seed);
    std::vector<double> arrivals(pending.size());
    for (std::size_t i = 0; i < pending.size(); ++i) arrivals[i] = pending[i].t_enqueue;
    const double svc = service_time(b, zoo, exec);
    auto timing = simulate_pool(arrivals, svc, svc - exec.fixed_overhead_s, exec);

    WindowScorer scorer{BinormalScorer(zoo, cfg.correlation), b.indices(), cfg.positive_rate, seed};
    std::vector<QueryTrace> out(pending.size());
    for (std::size_t i = 0; i < pending.size(); ++i) {
        auto& q = out[i];
        q.query_id = static_cast<std::int64_t>(i);
        q.patient_id = pending[i].patient;
        q.window_index = pending[i].window;
        q.t_ingest = pending[i].t_ingest;
        q.t_enqueue = pending[i].t_enqueue;
        q.t_dequeue = timing[i].start;
        q.t_done = timing[i].done;
        scorer.fill(q);
    }
    return out;
}

E2EReport e2e_percentiles(const std::vector<QueryTrace>& traces) {
    if (traces.empty()) throw InvalidArgument("e2e_percentiles: no traces");
    std::vector<double> query, capture;
    for (const auto& t : traces) {
        query.push_back(t.t_done - t.t_enqueue);
        capture.push_back(t.t_done - t.t_ingest);
    }
    auto pct = [](const std::vector<double>& v) {
        return Percentiles{nearest_rank_percentile(v, 50), nearest_rank_percentile(v, 95),
                           nearest_rank_percentile(v, 99)};
    };
    return {pct(query), pct(capture), traces.size()};
}

std::vector<double> queueing_delays(const std::vector<QueryTrace>& traces) {
    std::vector<double> out;
    out.reserve(traces.size());
    for (const auto& t : traces) out.push_back(t.t_dequeue - t.t_enqueue);
    return out;
}

BatchComparison batch_comparison(const ModelZoo& zoo, const Selector& b, const ExecutorModel& exec,
                                 const RuntimeConfig& cfg, const BatchOptions& opts, std::uint64_t seed) {
    if (!(opts.batch_period_s >= cfg.window_s)) throw ConfigError("batch_period_s must be >= window_s");
    if (!(opts.sample_interval_s > 0.0)) throw ConfigError("sample_interval_s must be > 0");
    // A batch spike needs at least one full period of streamed data.
    RuntimeConfig run = cfg;
    run.duration_s = std::max(cfg.duration_s, opts.batch_period_s);
    auto traces = run_simulation(zoo, b, exec, run, seed);

    BatchComparison out;
    double horizon = 0.0;
    for (const auto& t : traces) {
        out.online.push_back({t.t_ingest, t.t_done - t.t_ingest, true});
        out.online_spike_s = std::max(out.online_spike_s, t.t_done - t.t_ingest);
        horizon = std::max(horizon, t.t_ingest);
    }
    for (double t = 0.0; t <= horizon; t += opts.sample_interval_s) out.online.push_back({t, cfg.aggregation_cost_s, false});
    std::stable_sort(out.online.begin(), out.online.end(),
                     [](const TimelinePoint& a, const TimelinePoint& c) { return a.t_s < c.t_s; });

    // Windows flushed in (k-1)P, kP] wait for the boundary kP and are then served back to back.
    const double svc = service_time(b, zoo, exec);
    std::map<std::int64_t, std::size_t> per_boundary;
    for (const auto& t : traces)
        ++per_boundary[static_cast<std::int64_t>(std::ceil(t.t_enqueue / opts.batch_period_s))];
    for (const auto& [k, count] : per_boundary) {
        double latency = static_cast<double>(count) * svc;
        out.batch.push_back({static_cast<double>(k) * opts.batch_period_s, latency, true});
        out.batch_spike_s = std::max(out.batch_spike_s, latency);
    }
    return out;
}

namespace {

nlohmann::ordered_json trace_json(const QueryTrace& t) {
    return {{"query_id", t.query_id},   {"patient_id", t.patient_id}, {"window_index", t.window_index},
            {"label", t.label ? 1 : 0}, {"t_ingest", t.t_ingest},     {"t_enqueue", t.t_enqueue},
            {"t_dequeue", t.t_dequeue}, {"t_done", t.t_done},         {"per_model_score", t.per_model_score},
            {"ensemble_score", t.ensemble_score}};
}

}  // namespace

std::string trace_to_jsonl(const QueryTrace& t) { return trace_json(t).dump(); }

void write_traces_jsonl(const std::vector<QueryTrace>& traces, std::ostream& out) {
    for (const auto& t : traces) out << trace_to_jsonl(t) << '\n';
}

std::string e2e_report_json(const E2EReport& r) {
    auto pct = [](const Percentiles& p) {
        return nlohmann::ordered_json{{"p50", p.p50}, {"p95", p.p95}, {"p99", p.p99}};
    };
    nlohmann::ordered_json j{{"n_queries", r.n}, {"query_latency_s", pct(r.query)}, {"capture_latency_s", pct(r.capture)}};
    return j.dump(2) + "\n";
}

std::string timelines_csv(const BatchComparison& c) {
    std::ostringstream out;
    out.precision(17);
    out << "timeline,t_s,latency_s,kind\n";
    for (const auto& p : c.online)
        out << "online," << p.t_s << "," << p.latency_s << "," << (p.inference ? "inference" : "aggregation") << "\n";
    for (const auto& p : c.batch) out << "batch," << p.t_s << "," << p.latency_s << ",inference\n";
    return out.str();
}

// ---- wall-clock mode

namespace {

template <typename T>
class BlockingQueue {
public:
    void push(T v) {
        {
            std::lock_guard lock(mu_);
            items_.push_back(std::move(v));
        }
        cv_.notify_one();
    }
    // Empty optional once closed and drained.
    std::optional<T> pop() {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return closed_ || !items_.empty(); });
        if (items_.empty()) return std::nullopt;
        T v = std::move(items_.front());
        items_.pop_front();
        return v;
    }
    void close() {
        {
            std::lock_guard lock(mu_);
            closed_ = true;
        }
        cv_.notify_all();
    }

private:
    std::mutex mu_;
    std::condition_variable cv_;
    std::deque<T> items_;
    bool closed_ = false;
};

}  // namespace

std::vector<QueryTrace> run_wallclock(const ModelZoo& zoo, const Selector& b, const ExecutorModel& exec,
                                      const RuntimeConfig& cfg, std::uint64_t seed, double time_scale) {
    cfg.validate();
    exec.validate();
    require_modalities(zoo, b, cfg);
    if (!(time_scale > 0.0)) throw InvalidArgument("run_wallclock: time_scale must be > 0");

    using Clock = std::chrono::steady_clock;
    const auto t0 = Clock::now();
    auto sim_now = [&] { return std::chrono::duration<double>(Clock::now() - t0).count() / time_scale; };
    auto wall_at = [&](double sim_s) {
        return t0 + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(sim_s * time_scale));
    };

    const double svc = service_time(b, zoo, exec);
    const std::int64_t windows = full_windows(cfg);
    WindowScorer scorer{BinormalScorer(zoo, cfg.correlation), b.indices(), cfg.positive_rate, seed};

    BlockingQueue<QueryTrace> queue;
    std::mutex sink_mu;
    std::vector<QueryTrace> sink;
    std::atomic<std::int64_t> next_id{0};

    std::vector<std::jthread> workers;
    for (int s = 0; s < exec.n_slots; ++s)
        workers.emplace_back([&] {
            while (auto q = queue.pop()) {
                q->t_dequeue = std::max(q->t_enqueue, sim_now());
                std::this_thread::sleep_until(wall_at(q->t_dequeue + svc));
                q->t_done = std::max(q->t_dequeue, sim_now());
                scorer.fill(*q);
                std::lock_guard lock(sink_mu);
                sink.push_back(std::move(*q));
            }
        });

    {
        std::vector<std::jthread> producers;
        for (int p = 0; p < cfg.patients; ++p)
            producers.emplace_back([&, p] {
                const double start = patient_stream_start(cfg, p, seed);
                std::vector<Aggregator> aggs;
                std::vector<double> rates;
                for (const auto& [m, r] : cfg.rates) {
                    aggs.emplace_back(p, m, cfg.samples_per_window(m));
                    rates.push_back(r);
                }
                for (std::int64_t w = 0; w < windows; ++w) {
                    double t_ingest = 0.0;
                    for (std::size_t m = 0; m < aggs.size(); ++m) {
                        auto n = cfg.samples_per_window(std::next(cfg.rates.begin(), static_cast<long>(m))->first);
                        double last = start + static_cast<double>((w + 1) * n - 1) / rates[m];
                        std::this_thread::sleep_until(wall_at(last));
                        SensorSample s{p, std::next(cfg.rates.begin(), static_cast<long>(m))->first, 0.0, 0.0};
                        for (std::int64_t k = w * n; k < (w + 1) * n; ++k) {
                            s.t_gen = start + static_cast<double>(k) / rates[m];
                            s.value = waveform(s.t_gen);
                            aggs[m].push(s);
                        }
                        t_ingest = std::max(t_ingest, last);
                    }
                    std::this_thread::sleep_until(wall_at(t_ingest + cfg.aggregation_cost_s));
                    QueryTrace q;
                    q.query_id = next_id++;
                    q.patient_id = p;
                    q.window_index = w;
                    q.t_ingest = t_ingest;
                    q.t_enqueue = std::max(t_ingest + cfg.aggregation_cost_s, sim_now());
                    queue.push(std::move(q));
                }
            });
    }
    queue.close();
    workers.clear();
    std::sort(sink.begin(), sink.end(), [](const QueryTrace& a, const QueryTrace& c) { return a.query_id < c.query_id; });
    return sink;
}

// ---- NDJSON / TCP ingest

SensorSample parse_sensor_sample(const std::string& line) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("sensor sample: malformed JSON: ") + e.what());
    }
    if (!j.is_object()) throw ParseError("sensor sample: expected an object");
    for (const auto& [k, v] : j.items())
        if (k != "patient_id" && k != "modality" && k != "t_gen" && k != "value")
            throw ParseError("sensor sample: unknown field '" + k + "'");
    auto need = [&](const char* k) -> const nlohmann::json& {
        if (!j.contains(k)) throw ParseError(std::string("sensor sample.") + k + ": missing");
        return j.at(k);
    };
    SensorSample s;
    const auto& p = need("patient_id");
    if (!p.is_number_integer() || p.get<long long>() < 0) throw ParseError("sensor sample.patient_id: expected a non-negative integer");
    s.patient_id = static_cast<int>(p.get<long long>());
    const auto& m = need("modality");
    if (!m.is_string()) throw ParseError("sensor sample.modality: expected a string");
    s.modality = m.get<std::string>();
    const auto& t = need("t_gen");
    if (!t.is_number() || !std::isfinite(t.get<double>())) throw ParseError("sensor sample.t_gen: expected a number");
    s.t_gen = t.get<double>();
    const auto& v = need("value");
    if (!v.is_number()) throw ParseError("sensor sample.value: expected a number");
    s.value = v.get<double>();
    return s;
}

IngestRouter::IngestRouter(RuntimeConfig cfg, std::function<void(const WindowBatch&)> on_window)
    : cfg_(std::move(cfg)), on_window_(std::move(on_window)) {
    cfg_.validate();
}

void IngestRouter::push(const SensorSample& s) {
    auto key = std::pair{s.patient_id, s.modality};
    auto it = aggregators_.find(key);
    if (it == aggregators_.end())
        it = aggregators_.emplace(key, Aggregator(s.patient_id, s.modality, cfg_.samples_per_window(s.modality))).first;
    auto [lt, fresh] = last_t_.emplace(key, s.t_gen);
    if (!fresh) {
        if (s.t_gen < lt->second) throw InvalidArgument("ingest: t_gen went backwards within a stream");
        lt->second = s.t_gen;
    }
    if (auto w = it->second.push(s)) on_window_(*w);
}

std::size_t IngestRouter::consume(std::istream& in) {
    std::string line;
    std::size_t n = 0, lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            push(parse_sensor_sample(line));
        } catch (const std::exception& e) {
            throw ParseError("line " + std::to_string(lineno) + ": " + e.what());
        }
        ++n;
    }
    return n;
}

struct TcpIngestServer::State {
    IngestRouter* router = nullptr;
    int listen_fd = -1;
    std::atomic<bool> stop{false};
    mutable std::mutex mu;
    std::size_t received = 0;
    std::vector<std::string> errors;
    std::thread thread;

    void serve_connection(int fd) {
        std::string pending;
        char buf[4096];
        while (!stop) {
            pollfd pfd{fd, POLLIN, 0};
            int r = ::poll(&pfd, 1, 50);
            if (r < 0) break;
            if (r == 0) continue;
            ssize_t got = ::recv(fd, buf, sizeof buf, 0);
            if (got <= 0) break;
            pending.append(buf, static_cast<std::size_t>(got));
            std::size_t nl;
            while ((nl = pending.find('\n')) != std::string::npos) {
                std::string line = pending.substr(0, nl);
                pending.erase(0, nl + 1);
                handle(line);
            }
        }
        if (!pending.empty()) handle(pending);
        ::close(fd);
    }

    void handle(const std::string& line) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) return;
        std::lock_guard lock(mu);
        try {
            router->push(parse_sensor_sample(line));
            ++received;
        } catch (const std::exception& e) {
            errors.emplace_back(e.what());
        }
    }

    void run() {
        while (!stop) {
            pollfd pfd{listen_fd, POLLIN, 0};
            int r = ::poll(&pfd, 1, 50);
            if (r <= 0) continue;
            int fd = ::accept(listen_fd, nullptr, nullptr);
            if (fd >= 0) serve_connection(fd);
        }
    }
};

TcpIngestServer::TcpIngestServer(IngestRouter& router, std::uint16_t port) : state_(std::make_unique<State>()) {
    state_->router = &router;
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw std::runtime_error("tcp ingest: socket() failed");
    int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(port);
    if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0 || ::listen(fd, 4) < 0) {
        ::close(fd);
        throw std::runtime_error("tcp ingest: cannot listen on 127.0.0.1:" + std::to_string(port));
    }
    socklen_t len = sizeof addr;
    ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    state_->listen_fd = fd;
    state_->thread = std::thread([s = state_.get()] { s->run(); });
}

TcpIngestServer::~TcpIngestServer() { stop(); }

void TcpIngestServer::stop() {
    if (!state_ || state_->listen_fd < 0) return;
    state_->stop = true;
    if (state_->thread.joinable()) state_->thread.join();
    ::close(state_->listen_fd);
    state_->listen_fd = -1;
}

std::size_t TcpIngestServer::samples_received() const {
    std::lock_guard lock(state_->mu);
    return state_->received;
}

std::vector<std::string> TcpIngestServer::errors() const {
    std::lock_guard lock(state_->mu);
    return state_->errors;
}

}  // namespace holmes
