#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "holmes/errors.hpp"
#include "holmes/experiment.hpp"

using namespace holmes;

int main(int argc, char** argv) {
    CLI::App app{"Latency-aware ensemble composition and streaming runtime simulator"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out;
    bool force = false;
    app.add_option("--config", config_path, "JSON experiment config")->check(CLI::ExistingFile);
    app.add_option("--seed", seed, "master seed (overrides config)");
    app.add_option("--out", out, "output directory (overrides config)");
    app.add_flag("--force", force, "allow writing into a non-empty output directory");

    auto* zoo = app.add_subcommand("zoo", "model zoo utilities");
    zoo->require_subcommand(1);
    auto* zoo_gen = zoo->add_subcommand("generate", "write a synthetic zoo to zoo.json");
    auto* compose = app.add_subcommand("compose", "run each method x repeat at one latency budget");
    auto* sweep = app.add_subcommand("latency-sweep", "run each method over a grid of latency budgets");
    auto* serve = app.add_subcommand("serve-sim", "simulate the streaming runtime and report latency percentiles");
    auto* batch = app.add_subcommand("batch-compare", "compare online and periodic batch inference latency");
    auto* surr = app.add_subcommand("surrogate-report", "held-out R2 of both surrogates per SMBO iteration");
    for (auto* s : {zoo_gen, compose, sweep, serve, batch, surr}) s->fallthrough();
    zoo->fallthrough();

    CLI11_PARSE(app, argc, argv);

    try {
        ExperimentConfig cfg = config_path.empty() ? ExperimentConfig{} : load_config(config_path);
        if (seed) cfg.seed = *seed;
        if (!out.empty()) cfg.output_dir = out;
        cfg.validate();
        const std::filesystem::path dir = cfg.output_dir;

        if (zoo_gen->parsed()) {
            cmd_zoo_generate(cfg, dir, force);
        } else if (compose->parsed()) {
            cmd_compose(cfg, dir, force);
        } else if (sweep->parsed()) {
            cmd_latency_sweep(cfg, dir, force);
        } else if (serve->parsed()) {
            auto r = cmd_serve_sim(cfg, dir, force);
            std::cout << "queries " << r.report.n << "  p50 " << r.report.query.p50 << " s  p95 " << r.report.query.p95
                      << " s  p99 " << r.report.query.p99 << " s\n";
        } else if (batch->parsed()) {
            auto c = cmd_batch_compare(cfg, dir, force);
            std::cout << "online spike " << c.online_spike_s << " s  batch spike " << c.batch_spike_s << " s  ratio "
                      << c.ratio() << "\n";
        } else if (surr->parsed()) {
            cmd_surrogate_report(cfg, dir, force);
        }
        std::cout << "wrote " << dir.string() << "\n";
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
