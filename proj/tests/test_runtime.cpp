#include <doctest.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <sstream>
#include <thread>

#include "holmes/errors.hpp"
#include "holmes/runtime.hpp"

using namespace holmes;

namespace {

const std::map<std::string, double> kThreeLeads{{"ECG-I", 250.0}, {"ECG-II", 250.0}, {"ECG-III", 250.0}};

ModelZoo leads_zoo() { return generate_zoo(3, {8, 16}, {2, 4}, 1); }

ExecutorModel fast_exec(int slots) {
    ExecutorModel e;
    e.n_slots = slots;
    e.per_mac_seconds = 1e-10;
    e.fixed_overhead_s = 1e-4;
    return e;
}

RuntimeConfig ecg1(int patients, double duration) {
    RuntimeConfig c;
    c.patients = patients;
    c.duration_s = duration;
    return c;
}

bool send_all(int fd, const std::string& s) {
    std::size_t off = 0;
    while (off < s.size()) {
        auto n = ::send(fd, s.data() + off, s.size() - off, 0);
        if (n <= 0) return false;
        off += static_cast<std::size_t>(n);
    }
    return true;
}

}  // namespace

TEST_CASE("window arithmetic") {
    auto zoo = leads_zoo();
    auto b = Selector::single(zoo.size(), 0);  // an ECG-I model
    auto traces = run_simulation(zoo, b, fast_exec(2), ecg1(1, 60.0), 1);
    CHECK(traces.size() == 2);
    CHECK(ecg1(1, 60.0).samples_per_window("ECG-I") == 7500);
    // partial tail windows are dropped
    CHECK(run_simulation(zoo, b, fast_exec(2), ecg1(1, 75.0), 1).size() == 2);
    CHECK(run_simulation(zoo, b, fast_exec(2), ecg1(1, 90.0), 1).size() == 3);
}

TEST_CASE("aggregator flushes whole windows") {
    Aggregator a(0, "ECG-I", 7500);
    int flushed = 0;
    for (int i = 0; i < 15000 + 10; ++i) {
        auto w = a.push({0, "ECG-I", i / 250.0, 0.0});
        if (w) {
            ++flushed;
            CHECK(w->samples.size() == 7500);
            CHECK(w->t_flush == doctest::Approx((7500.0 * flushed - 1) / 250.0));
        }
    }
    CHECK(flushed == 2);
    CHECK(a.total_samples() == 15010);
    CHECK_THROWS_AS(a.push({1, "ECG-I", 100.0, 0.0}), InvalidArgument);
}

TEST_CASE("full load is 16000 samples per second") {
    RuntimeConfig c;
    c.patients = 64;
    double total = 0;
    for (const auto& [m, r] : c.rates) total += r * c.patients;
    CHECK(total == 16000.0);
    auto zoo = leads_zoo();
    auto traces = run_simulation(zoo, Selector::single(zoo.size(), 0), fast_exec(2), ecg1(64, 30.0), 2);
    CHECK(traces.size() == 64);
}

TEST_CASE("trace timing") {
    auto zoo = leads_zoo();
    RuntimeConfig c = ecg1(8, 120.0);
    c.rates = kThreeLeads;
    Selector b(zoo.size());
    b.set(0);
    b.set(5);
    b.set(10);
    auto traces = run_simulation(zoo, b, fast_exec(2), c, 3);
    CHECK(traces.size() == 32);
    double svc = service_time(b, zoo, fast_exec(2));
    for (const auto& t : traces) {
        CHECK(t.t_enqueue == doctest::Approx(t.t_ingest + c.aggregation_cost_s));
        CHECK(t.t_dequeue >= t.t_enqueue);
        CHECK(t.t_done == doctest::Approx(t.t_dequeue + svc));
        CHECK(t.per_model_score.size() == 3);
        double mean = (t.per_model_score[0] + t.per_model_score[1] + t.per_model_score[2]) / 3.0;
        CHECK(t.ensemble_score == doctest::Approx(mean));
    }
    auto r = e2e_percentiles(traces);
    CHECK(r.query.p50 <= r.query.p95);
    CHECK(r.query.p95 <= r.query.p99);
    CHECK(r.capture.p95 >= r.query.p95);
}

TEST_CASE("uncontended p95 is the raw service time") {
    auto zoo = leads_zoo();
    auto b = Selector::single(zoo.size(), 0);
    auto r = e2e_percentiles(run_simulation(zoo, b, fast_exec(1), ecg1(1, 30.0), 4));
    CHECK(r.n == 1);
    CHECK(r.query.p95 == doctest::Approx(service_time(b, zoo, fast_exec(1))));
}

TEST_CASE("missing modality stream") {
    auto zoo = leads_zoo();
    CHECK_THROWS_AS(run_simulation(zoo, Selector::single(zoo.size(), 10), fast_exec(1), ecg1(1, 30.0), 1), ConfigError);
    RuntimeConfig bad = ecg1(1, 30.0);
    bad.window_s = 0.001;  // 0.25 samples per window
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("simulation is deterministic") {
    auto zoo = leads_zoo();
    RuntimeConfig c = ecg1(16, 90.0);
    c.rates = kThreeLeads;
    auto b = Selector::all(zoo.size());
    std::ostringstream a, d;
    write_traces_jsonl(run_simulation(zoo, b, fast_exec(2), c, 5), a);
    write_traces_jsonl(run_simulation(zoo, b, fast_exec(2), c, 5), d);
    CHECK(a.str() == d.str());
    CHECK(patient_stream_start(c, 3, 5) == patient_stream_start(c, 3, 5));
    CHECK(patient_stream_start(c, 3, 5) < c.window_s);
}

TEST_CASE("p95 grows with patients") {
    auto zoo = leads_zoo();
    auto b = Selector::all(zoo.size());
    RuntimeConfig c;
    c.rates = kThreeLeads;
    c.window_s = 1.0 / 250.0;
    c.duration_s = 2.0;
    ExecutorModel e = fast_exec(2);
    e.fixed_overhead_s = 2e-4;
    double prev = 0.0;
    for (int p : {4, 8, 16, 32, 64}) {
        c.patients = p;
        double p95 = e2e_percentiles(run_simulation(zoo, b, e, c, 6)).query.p95;
        CHECK(p95 >= prev);
        prev = p95;
    }
}

TEST_CASE("batch versus online") {
    auto zoo = leads_zoo();
    auto b = Selector::single(zoo.size(), 0);
    RuntimeConfig c = ecg1(4, 60.0);
    ExecutorModel e;
    BatchOptions o;
    auto cmp = batch_comparison(zoo, b, e, c, o, 7);
    double svc = service_time(b, zoo, e);
    CHECK(cmp.batch_spike_s >= (o.batch_period_s / c.window_s) * svc);
    CHECK(cmp.online_spike_s <= cmp.batch_spike_s / 10.0);
    for (const auto& p : cmp.online)
        if (!p.inference) CHECK(p.latency_s == c.aggregation_cost_s);
    CHECK(timelines_csv(cmp).rfind("timeline,t_s,latency_s,kind\n", 0) == 0);
    o.batch_period_s = 10.0;
    CHECK_THROWS_AS(batch_comparison(zoo, b, e, c, o, 7), ConfigError);
}

TEST_CASE("sensor sample parsing") {
    auto s = parse_sensor_sample(R"({"patient_id":3,"modality":"ECG-II","t_gen":1.5,"value":-0.25})");
    CHECK(s.patient_id == 3);
    CHECK(s.modality == "ECG-II");
    CHECK(s.t_gen == 1.5);
    CHECK(s.value == -0.25);
    CHECK_THROWS_AS(parse_sensor_sample("{"), ParseError);
    CHECK_THROWS_AS(parse_sensor_sample(R"({"patient_id":3,"modality":"ECG-II","t_gen":1.5})"), ParseError);
    CHECK_THROWS_AS(parse_sensor_sample(R"({"patient_id":-1,"modality":"ECG-II","t_gen":1.5,"value":0})"), ParseError);
    CHECK_THROWS_AS(parse_sensor_sample(R"({"patient_id":1,"modality":"ECG-II","t_gen":1.5,"value":0,"x":1})"),
                    ParseError);
}

TEST_CASE("ingest router") {
    RuntimeConfig c;
    c.window_s = 0.02;  // 5 samples at 250 Hz
    std::vector<WindowBatch> got;
    IngestRouter router(c, [&](const WindowBatch& w) { got.push_back(w); });
    std::ostringstream in;
    for (int i = 0; i < 12; ++i)
        in << R"({"patient_id":0,"modality":"ECG-I","t_gen":)" << i / 250.0 << R"(,"value":)" << i << "}\n";
    std::istringstream is(in.str());
    CHECK(router.consume(is) == 12);
    REQUIRE(got.size() == 2);
    CHECK(got[1].samples == std::vector<double>{5, 6, 7, 8, 9});
    CHECK_THROWS_AS(router.push({0, "ECG-I", 0.0, 1.0}), InvalidArgument);
    std::istringstream bad("\n{\"patient_id\":0}\n");
    try {
        router.consume(bad);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
}

TEST_CASE("tcp loopback ingest") {
    RuntimeConfig c;
    c.window_s = 0.02;
    std::atomic<int> windows{0};
    IngestRouter router(c, [&](const WindowBatch&) { ++windows; });
    TcpIngestServer server(router);
    REQUIRE(server.port() != 0);

    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(server.port());
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    REQUIRE(::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0);
    std::ostringstream out;
    for (int i = 0; i < 10; ++i)
        out << R"({"patient_id":0,"modality":"ECG-I","t_gen":)" << i / 250.0 << R"(,"value":1.0})" << "\n";
    out << "not json\n";
    REQUIRE(send_all(fd, out.str()));
    ::close(fd);

    for (int i = 0; i < 200 && (server.samples_received() < 10 || server.errors().empty()); ++i)
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
    server.stop();
    CHECK(server.samples_received() == 10);
    CHECK(windows == 2);
    CHECK(server.errors().size() == 1);
}

TEST_CASE("wall-clock mode smoke") {
    auto zoo = leads_zoo();
    auto b = Selector::single(zoo.size(), 0);
    auto traces = run_wallclock(zoo, b, fast_exec(2), ecg1(2, 60.0), 1, 0.001);
    CHECK(traces.size() == 4);
    for (const auto& t : traces) {
        CHECK(t.t_done >= t.t_dequeue);
        CHECK(t.t_dequeue >= t.t_enqueue);
    }
}
