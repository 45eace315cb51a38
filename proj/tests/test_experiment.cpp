#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "holmes/errors.hpp"
#include "holmes/experiment.hpp"

using namespace holmes;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    auto d = fs::temp_directory_path() / "holmes_tests" / name;
    fs::remove_all(d);
    return d;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

// Small n=10 setup that runs in well under a second per method.
ExperimentConfig small_config() {
    return parse_config(nlohmann::json::parse(R"({
        "seed": 3,
        "repeats": 2,
        "zoo": {"leads": 1, "filters": [8, 16, 32, 64, 128], "blocks": [4, 16]},
        "cohort": {"n_pos": 1000, "n_neg": 1000},
        "search": {"n_iters": 6, "n_explore": 50}
    })"));
}

std::vector<std::string> csv_lines(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) out.push_back(line);
    return out;
}

}  // namespace

TEST_CASE("config defaults and overrides") {
    auto d = parse_config(nlohmann::json::object());
    CHECK(d.repeats == 20);
    CHECK(d.methods.size() == 5);
    CHECK(d.search.n_warm == 20);
    auto c = small_config();
    CHECK(c.seed == 3);
    CHECK(c.zoo.filters.size() == 5);
    CHECK(c.search.n_iters == 6);
    CHECK(build_zoo(c, 0).size() == 10);
}

TEST_CASE("config errors name the field path") {
    auto fails_with = [](const char* text, const char* path) {
        try {
            parse_config(nlohmann::json::parse(text));
            FAIL("expected a config error for " << text);
        } catch (const ConfigError& e) {
            CHECK_MESSAGE(std::string(e.what()).find(path) != std::string::npos, std::string(e.what()));
        }
    };
    fails_with(R"({"repeats": 0})", "config.repeats");
    fails_with(R"({"methods": []})", "config.methods");
    fails_with(R"({"methods": ["RD", "XX"]})", "config.methods[1]");
    fails_with(R"({"search": {"n_iters": "many"}})", "config.search.n_iters");
    fails_with(R"({"search": {"constraint_mode": "medium"}})", "config.search.constraint_mode");
    fails_with(R"({"zoo": {"leeds": 3}})", "config.zoo.leeds");
    fails_with(R"({"cohort": {"correlation": 1.5}})", "config.cohort.correlation");
    fails_with(R"({"serve": {"runtime": {"window_s": 0.001}}})", "config.serve.runtime");
    fails_with(R"({"latency_budgets_s": [0.1, -1]})", "config.latency_budgets_s[1]");
    fails_with(R"({"surplus": true})", "config.surplus");
}

TEST_CASE("derived seeds") {
    auto c = small_config();
    CHECK(method_seed(c, "HOLMES", 0) != method_seed(c, "HOLMES", 1));
    CHECK(method_seed(c, "HOLMES", 0) != method_seed(c, "NPO", 0));
    CHECK(instance_seed(c, 0) != instance_seed(c, 1));
    c.vary_instance = false;
    CHECK(instance_seed(c, 0) == instance_seed(c, 1));
}

TEST_CASE("compose with one method and one repeat") {
    auto c = small_config();
    c.methods = {"HOLMES"};
    c.repeats = 1;
    auto dir = fresh_dir("compose_one");
    auto out = cmd_compose(c, dir, false);
    CHECK(out.runs.size() == 1);
    CHECK(fs::exists(dir / "runs" / "HOLMES" / "r0.json"));
    CHECK(fs::exists(dir / "trajectories" / "HOLMES" / "r0.csv"));
    auto lines = csv_lines(slurp(dir / "results.csv"));
    CHECK(lines[0] == "method,metric,mean,std");
    CHECK(lines.size() == 7);
    auto manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
    CHECK(manifest["layout_version"] == kOutputLayoutVersion);
    CHECK_THROWS_AS(cmd_compose(c, dir, false), ConfigError);
    CHECK_NOTHROW(cmd_compose(c, dir, true));
}

TEST_CASE("compose with the oracle") {
    auto c = small_config();
    c.methods = {"RD", "AF", "LF", "NPO", "HOLMES", "ORACLE"};
    auto out = cmd_compose(c, fresh_dir("compose_oracle"), false);
    CHECK(out.runs.size() == 12);
    auto text = slurp(fresh_dir("compose_oracle") / "results.csv");
    for (int r = 0; r < 2; ++r) {
        double oracle = 0;
        for (const auto& m : out.runs)
            if (m.repeat == r && m.method == "ORACLE") oracle = m.result.best_objective;
        for (const auto& m : out.runs)
            if (m.repeat == r) CHECK(m.result.best_objective <= oracle);
    }
}

TEST_CASE("compose outputs are byte-identical on rerun") {
    auto c = small_config();
    auto a = fresh_dir("det_a"), b = fresh_dir("det_b");
    auto ra = cmd_compose(c, a, false);
    cmd_compose(c, b, false);
    for (const auto& f : ra.files) CHECK(slurp(f) == slurp(b / fs::relative(f, a)));
}

TEST_CASE("latency sweep") {
    auto c = small_config();
    c.methods = {"HOLMES", "ORACLE"};
    auto dir = fresh_dir("sweep");
    auto out = cmd_latency_sweep(c, dir, false);
    auto lines = csv_lines(slurp(dir / "sweep.csv"));
    // 3 budgets x 2 methods x 2 repeats
    CHECK(lines.size() == 1 + 12);
    CHECK(fs::exists(dir / "sweep_summary.csv"));
    for (int r = 0; r < 2; ++r) {
        double prev = -1.0;
        for (double L : c.latency_budgets_s)
            for (const auto& m : out.runs)
                if (m.method == "ORACLE" && m.repeat == r && m.budget == L) {
                    CHECK(m.report.roc_auc >= prev);
                    prev = m.report.roc_auc;
                }
    }
    c.latency_budgets_s = {0.2};
    CHECK_THROWS_AS(cmd_latency_sweep(c, fresh_dir("sweep1"), false), ConfigError);
}

TEST_CASE("empty result is scored at chance") {
    auto c = small_config();
    c.methods = {"AF"};
    c.latency_budget_s = 1e-6;
    c.repeats = 1;
    auto out = cmd_compose(c, fresh_dir("chance"), false);
    REQUIRE(out.runs[0].empty);
    CHECK(out.runs[0].report.roc_auc == 0.5);
}

TEST_CASE("serve-sim and batch-compare outputs") {
    auto c = parse_config(nlohmann::json::parse(R"({
        "serve": {"runtime": {"patients": 4, "duration_s": 90,
                              "rates": {"ECG-I": 250, "ECG-II": 250, "ECG-III": 250}},
                  "models": ["ecg1_w8_d2", "ecg2_w8_d2"],
                  "patients_sweep": [1, 4], "slots_sweep": [1, 2]}
    })"));
    auto dir = fresh_dir("serve");
    auto s = cmd_serve_sim(c, dir, false);
    CHECK(s.report.n == 12);
    CHECK(csv_lines(slurp(dir / "traces.jsonl")).size() == 12);
    CHECK(s.scaling.size() == 4);
    auto pct = nlohmann::json::parse(slurp(dir / "percentiles.json"));
    CHECK(pct["selector"].get<std::string>().substr(0, 21) == "100000000000000000001");
    CHECK(pct.contains("latency_estimate"));

    auto bdir = fresh_dir("batch");
    auto cmp = cmd_batch_compare(c, bdir, false);
    CHECK(cmp.ratio() >= 10.0);
    CHECK(fs::exists(bdir / "timelines.csv"));

    c.serve.models = {"nope"};
    CHECK_THROWS_AS(cmd_serve_sim(c, fresh_dir("serve_bad"), false), ConfigError);
}

TEST_CASE("surrogate report") {
    auto c = small_config();
    c.repeats = 1;
    c.surrogate_report.probes = 30;
    auto dir = fresh_dir("surrogate");
    auto rows = cmd_surrogate_report(c, dir, false);
    REQUIRE(rows.size() == static_cast<std::size_t>(c.search.n_iters + 1));
    CHECK(rows[0].iter == 0);
    for (const auto& r : rows) {
        if (!std::isnan(r.r2_accuracy)) CHECK(r.r2_accuracy <= 1.0);
        if (!std::isnan(r.r2_latency)) CHECK(r.r2_latency <= 1.0);
    }
    CHECK(csv_lines(slurp(dir / "surrogate_r2.csv"))[0] == "repeat,iter,train_size,r2_accuracy,r2_latency,note");
    c.methods = {"RD"};
    CHECK_THROWS_AS(cmd_surrogate_report(c, fresh_dir("surrogate2"), false), ConfigError);
}

TEST_CASE("trailing mean") {
    auto m = trailing_mean({3, 6, 9, 12}, 3);
    CHECK(m == std::vector<double>{3, 4.5, 6, 9});
    CHECK_THROWS_AS(trailing_mean({1}, 0), InvalidArgument);
}
