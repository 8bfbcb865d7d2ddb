// Copyright 2026 The anapipe Authors
// SPDX-License-Identifier: Apache-2.0
//
// Experiment configuration, execution and result emission.
//
// The config format is documented in docs/config.md. A file holds optional
// global keys, one or more [run] sections and at most one [sweep] section whose
// comma-separated values are expanded as a cartesian product over every run.

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "anapipe/trainloop.hpp"

namespace anapipe {

struct DataSpec {
    // "teacher", "gmm" or "csv".
    std::string kind = "teacher";
    std::filesystem::path csv_path;
    std::size_t n = 2048;
    // Held-out samples generated with a different seed; 0 evaluates on the
    // first eval_batch training samples instead.
    std::size_t eval_n = 512;
    std::size_t dim = 16;
    std::size_t classes = 2;
    double separation = 1.0;
    double spread = 0.25;
    std::size_t outputs = 1;
    std::size_t teacher_stages = 2;
    std::size_t teacher_hidden = 0;
    double teacher_scale = 1.0;
    bool normalize = true;
    // Data generator seed; defaults to the run seed.
    std::optional<std::uint64_t> seed;

    bool operator==(const DataSpec&) const = default;
};

struct RunSpec {
    std::string name;
    // Name of the [run] section an expanded run came from.
    std::string origin;
    RunConfig run;
    DataSpec data;
    // Shape shorthand used when run.stage_dims is empty: input and output
    // widths come from the data, with stages - 1 hidden layers of width hidden.
    std::size_t stages = 0;
    std::size_t hidden = 0;
    // Sweep coordinates of an expanded run, in axis order.
    std::vector<std::pair<std::string, std::string>> axes;

    bool operator==(const RunSpec&) const = default;
};

struct SweepAxis {
    std::string key;
    std::vector<std::string> values;

    bool operator==(const SweepAxis&) const = default;
};

struct ExperimentConfig {
    std::vector<RunSpec> runs;
    std::vector<SweepAxis> sweep;
    std::filesystem::path out_dir = "results";
    std::optional<double> target_loss;
    std::optional<double> target_accuracy;
    // Worker threads for independent runs; 0 picks the hardware concurrency.
    std::size_t threads = 0;

    bool operator==(const ExperimentConfig&) const = default;
};

/// Parses and validates a config. Errors are ParseError (syntax, with the
/// line) or ConfigError (semantics); both name the offending key.
ExperimentConfig parse_config(std::istream& in);
ExperimentConfig parse_config(const std::filesystem::path& path);

/// Canonical text form; parse_config(serialize(c)) == c.
std::string serialize(const ExperimentConfig& cfg);

/// Applies one run-level key to a spec. Throws ConfigError naming the key.
void apply_run_key(RunSpec& spec, const std::string& key, const std::string& value);

/// Run list with the sweep expanded. Every run is validated.
std::vector<RunSpec> expand_runs(const ExperimentConfig& cfg);

/// Fills in stage_dims from the shape shorthand and the data dimensions.
std::vector<std::size_t> resolve_dims(const RunSpec& spec, std::size_t input_dim,
                                      std::size_t output_dim);

/// Builds the training and evaluation data of a run.
DataSource make_data(const RunSpec& spec);

/// RunConfig with stage_dims resolved against the data.
RunConfig resolve_run(const RunSpec& spec, const DataSource& data);

struct RunResult {
    RunSpec spec;
    std::optional<RunMetrics> metrics;
    std::string error;
    std::filesystem::path csv_path;
    std::filesystem::path json_path;
    nlohmann::json summary;

    bool ok() const noexcept { return metrics.has_value(); }
};

struct SpeedupRow {
    std::string run;
    std::string baseline;
    Strategy schedule = Strategy::Asynchronous;
    std::uint32_t stages = 0;
    std::size_t micro_batches = 0;
    // Steady-state samples per cycle relative to the baseline.
    double throughput_speedup = 0.0;
    std::optional<std::uint64_t> cycles_to_target;
    std::optional<std::uint64_t> baseline_cycles_to_target;
    // baseline cycles_to_target / run cycles_to_target, when both exist.
    std::optional<double> time_speedup;
};

struct ResultBundle {
    std::vector<RunResult> runs;
    std::vector<SpeedupRow> speedups;
    std::filesystem::path out_dir;
    std::filesystem::path summary_path;

    bool all_ok() const;
};

struct ExperimentOptions {
    bool quiet = false;
    bool write_files = true;
};

/// Runs every expanded run (concurrently when threads > 1) and writes
/// per-run CSV and JSON files plus summary.json into cfg.out_dir. Failed runs
/// are recorded in the bundle rather than thrown.
ResultBundle run_experiment(const ExperimentConfig& cfg, const ExperimentOptions& opts = {});

/// Clock cycle at which a run reaches the configured target, if it does.
std::optional<std::uint64_t> cycles_to_target(const RunMetrics& m, const ExperimentConfig& cfg);

/// Speedup rows of every run against the baseline of its group: the
/// no-pipeline run with the same name and sweep coordinates apart from
/// schedule, falling back to the first run of the group.
std::vector<SpeedupRow> speedup_table(const std::vector<RunResult>& runs, const ExperimentConfig& cfg);

nlohmann::json run_summary(const RunResult& r, const ExperimentConfig& cfg);

/// Writes the per-run time series.
void write_metrics_csv(std::ostream& os, const RunMetrics& m);

/// accuracy_vs_epoch.csv, accuracy_vs_cycle.csv and speedup_vs_stages.csv.
void emit_plotdata(const ResultBundle& bundle);

}  // namespace anapipe
