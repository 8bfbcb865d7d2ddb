// Copyright 2026 The anapipe Authors
// SPDX-License-Identifier: Apache-2.0
//
// anapipe command line.
//
//   anapipe run <config>        run the [run] sections (any [sweep] is ignored)
//   anapipe sweep <config>      run the expanded sweep
//   anapipe validate <config>   parse, expand and print the canonical config
//   anapipe timeline <M> <K>    dump the asynchronous schedule as CSV
//
// Exit status: 0 on success, 1 on a configuration error, 2 if a run failed.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "anapipe/errors.hpp"
#include "anapipe/expcli.hpp"
#include "anapipe/pipesched.hpp"

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitRun = 2;

anapipe::ExperimentConfig load(const std::string& path, const std::optional<std::string>& out,
                               const std::optional<std::uint64_t>& seed) {
    auto cfg = anapipe::parse_config(std::filesystem::path(path));
    if (out) {
        cfg.out_dir = *out;
    }
    if (seed) {
        for (auto& r : cfg.runs) {
            r.run.seed = *seed;
        }
    }
    return cfg;
}

int execute(anapipe::ExperimentConfig cfg, bool quiet) {
    const auto bundle = anapipe::run_experiment(cfg, {quiet, true});
    if (!quiet) {
        for (const auto& r : bundle.runs) {
            std::cout << r.spec.name << ": ";
            if (r.ok()) {
                std::cout << "final_loss=" << r.metrics->final_loss()
                          << " cycles=" << r.metrics->ledger.total_cycles
                          << " density=" << r.metrics->density() << '\n';
            } else {
                std::cout << "FAILED: " << r.error << '\n';
            }
        }
        std::cout << "summary: " << bundle.summary_path.string() << '\n';
    }
    return bundle.all_ok() ? 0 : kExitRun;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cycle-accurate simulator of pipelined analog in-memory training"};
    app.require_subcommand(1);
    app.fallthrough();

    std::optional<std::string> out;
    std::optional<std::uint64_t> seed;
    bool quiet = false;
    app.add_option("--out", out, "Output directory (overrides the config)");
    app.add_option("--seed", seed, "Seed for every run (overrides the config)");
    app.add_flag("--quiet", quiet, "Suppress progress output");

    std::string config_path;
    auto* run_cmd = app.add_subcommand("run", "Run the configured runs");
    run_cmd->add_option("config", config_path, "Config file")->required();
    auto* sweep_cmd = app.add_subcommand("sweep", "Run the expanded sweep");
    sweep_cmd->add_option("config", config_path, "Config file")->required();
    auto* validate_cmd = app.add_subcommand("validate", "Check a config and print its canonical form");
    validate_cmd->add_option("config", config_path, "Config file")->required();

    std::uint32_t stages = 0;
    std::uint64_t data = 0;
    auto* timeline_cmd = app.add_subcommand("timeline", "Dump the asynchronous schedule as CSV");
    timeline_cmd->add_option("M", stages, "Pipeline stages")->required()->check(CLI::PositiveNumber);
    timeline_cmd->add_option("K", data, "Micro-batches")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (*timeline_cmd) {
            anapipe::write_timeline_csv(std::cout, anapipe::async_event_stream(stages, data));
            return 0;
        }
        auto cfg = load(config_path, out, seed);
        if (*validate_cmd) {
            const auto runs = anapipe::expand_runs(cfg);
            std::cout << anapipe::serialize(cfg);
            if (!quiet) {
                std::cerr << "ok: " << cfg.runs.size() << " run section(s), " << runs.size()
                          << " expanded run(s)\n";
            }
            return 0;
        }
        if (*run_cmd) {
            if (!cfg.sweep.empty() && !quiet) {
                std::cerr << "note: ignoring [sweep]; use 'anapipe sweep' to expand it\n";
            }
            cfg.sweep.clear();
        } else if (cfg.sweep.empty()) {
            std::cerr << "error: config has no [sweep] section\n";
            return kExitConfig;
        }
        return execute(std::move(cfg), quiet);
    } catch (const anapipe::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRun;
    }
}
