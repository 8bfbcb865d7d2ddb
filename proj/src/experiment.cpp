// Copyright 2026 The anapipe Authors
// SPDX-License-Identifier: Apache-2.0

#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include "anapipe/errors.hpp"
#include "anapipe/expcli.hpp"

namespace anapipe {

namespace {

std::string num(double v) {
    if (std::isnan(v)) {
        return {};
    }
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

nlohmann::json opt_json(const std::optional<double>& v) {
    if (!v || !std::isfinite(*v)) {
        return nullptr;
    }
    return *v;
}

nlohmann::json opt_json(const std::optional<std::uint64_t>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

// Splits the last eval_n samples off as a held-out set.
DataSource split_tail(Dataset all, std::size_t eval_n, std::size_t eval_batch) {
    DataSource src;
    if (eval_n > 0 && all.samples.size() > eval_n) {
        const auto cut = all.samples.end() - static_cast<std::ptrdiff_t>(eval_n);
        std::vector<Sample> held(cut, all.samples.end());
        all.samples.erase(cut, all.samples.end());
        Dataset eval = all;
        eval.samples = std::move(held);
        src.eval = make_eval_batch(eval, eval_batch);
    } else {
        src.eval = make_eval_batch(all, eval_batch);
    }
    src.train = std::move(all);
    return src;
}

std::ofstream open_out(const std::filesystem::path& p) {
    std::ofstream out(p);
    if (!out) {
        throw std::runtime_error("cannot write " + p.string());
    }
    return out;
}

// Steady-state throughput relative to a no-pipeline run of the same depth,
// which completes one micro-batch every 2M cycles. One division of exact
// integers, so rational ratios such as 48/13 are correctly rounded.
double throughput_vs_nopipe(const CycleLedger& l) {
    const std::uint64_t cycles = l.total_cycles - l.fill_drain_cycles;
    if (cycles == 0) {
        return 0.0;
    }
    return static_cast<double>(l.samples_completed * 2 * l.stages) / static_cast<double>(cycles);
}

bool same_point(const RunSpec& a, const RunSpec& b) {
    std::vector<std::pair<std::string, std::string>> x;
    std::vector<std::pair<std::string, std::string>> y;
    for (const auto& p : a.axes) {
        if (p.first != "schedule") {
            x.push_back(p);
        }
    }
    for (const auto& p : b.axes) {
        if (p.first != "schedule") {
            y.push_back(p);
        }
    }
    return x == y;
}

}  // namespace

DataSource make_data(const RunSpec& spec) {
    const DataSpec& d = spec.data;
    const std::uint64_t seed = d.seed.value_or(spec.run.seed);
    const std::size_t eval_batch = spec.run.eval_batch;
    if (d.kind == "teacher") {
        TeacherSpec t;
        t.stages = d.teacher_stages;
        t.hidden_dim = d.teacher_hidden;
        t.output_dim = d.outputs;
        t.weight_scale = d.teacher_scale;
        return split_tail(gen_teacher_regression(seed, d.n + d.eval_n, d.dim, t), d.eval_n, eval_batch);
    }
    if (d.kind == "gmm") {
        MixtureSpec m;
        m.separation = d.separation;
        m.spread = d.spread;
        return split_tail(gen_gaussian_mixture(seed, d.n + d.eval_n, d.dim, d.classes, m), d.eval_n,
                          eval_batch);
    }
    if (d.kind == "csv") {
        return split_tail(load_csv(d.csv_path, d.normalize), d.eval_n, eval_batch);
    }
    throw ConfigError("key 'data': unknown kind '" + d.kind + "'");
}

RunConfig resolve_run(const RunSpec& spec, const DataSource& data) {
    RunConfig rc = spec.run;
    rc.stage_dims = resolve_dims(spec, data.train.feature_dim, data.train.label_dim);
    return rc;
}

bool ResultBundle::all_ok() const {
    for (const auto& r : runs) {
        if (!r.ok()) {
            return false;
        }
    }
    return true;
}

std::optional<std::uint64_t> cycles_to_target(const RunMetrics& m, const ExperimentConfig& cfg) {
    if (cfg.target_accuracy) {
        return m.cycles_to_target_accuracy(*cfg.target_accuracy);
    }
    if (cfg.target_loss) {
        return m.cycles_to_target_loss(*cfg.target_loss);
    }
    return std::nullopt;
}

void write_metrics_csv(std::ostream& os, const RunMetrics& m) {
    os << "update_k,clock_cycle,train_loss,eval_loss,grad_norm_sq,accuracy,max_weight_inf,samples_done\n";
    for (const auto& r : m.records) {
        os << r.update_k << ',' << r.clock_cycle << ',' << num(r.train_loss) << ',' << num(r.eval_loss)
           << ',' << num(r.grad_norm_sq) << ',' << num(r.accuracy) << ',' << num(r.max_weight_inf) << ','
           << r.samples_done << '\n';
    }
}

nlohmann::json run_summary(const RunResult& r, const ExperimentConfig& cfg) {
    const RunConfig& rc = r.spec.run;
    nlohmann::json j;
    j["run_name"] = r.spec.name;
    j["schedule"] = strategy_name(rc.schedule);
    j["B"] = rc.micro_batches();
    j["tau"] = rc.device.inv_tau == 0.0 ? nlohmann::json("inf") : nlohmann::json(rc.device.tau());
    j["alpha"] = rc.alpha;
    j["seed"] = rc.seed;
    j["b_mini"] = rc.b_mini;
    j["b_micro"] = rc.b_micro;
    j["noise_sigma"] = rc.noise_sigma;
    nlohmann::json axes = nlohmann::json::object();
    for (const auto& [k, v] : r.spec.axes) {
        axes[k] = v;
    }
    j["sweep"] = axes;
    if (!r.ok()) {
        j["status"] = "failed";
        j["error"] = r.error;
        j["M"] = rc.stage_count() == 0 ? nlohmann::json(r.spec.stages) : nlohmann::json(rc.stage_count());
        return j;
    }
    const RunMetrics& m = *r.metrics;
    j["status"] = "ok";
    j["M"] = m.ledger.stages;
    j["updates"] = m.updates;
    j["cycles_total"] = m.ledger.total_cycles;
    j["samples_total"] = m.samples_total();
    j["measured_density"] = m.density();
    j["throughput_speedup"] = throughput_vs_nopipe(m.ledger);
    j["cycles_to_target"] = opt_json(cycles_to_target(m, cfg));
    j["final_loss"] = opt_json(std::optional<double>(m.final_loss()));
    j["final_accuracy"] = opt_json(m.final_accuracy());
    j["saturation_degree"] = m.saturation_degree();
    j["saturation_events"] = m.device_stats.saturation_events;
    j["amplification_S"] = opt_json(m.amplification_s());
    j["amplification_Sprime_u"] = opt_json(m.amplification_s_prime());
    j["amplification_S_linear"] = opt_json(std::optional<double>(m.amplification_s_linear()));
    j["u"] = m.u_slack;
    j["staleness_checks"] = m.staleness_checks;
    return j;
}

std::vector<SpeedupRow> speedup_table(const std::vector<RunResult>& runs, const ExperimentConfig& cfg) {
    std::vector<SpeedupRow> rows;
    for (const RunResult& r : runs) {
        if (!r.ok()) {
            continue;
        }
        const RunMetrics& m = *r.metrics;
        const RunResult* base = nullptr;
        for (const RunResult& b : runs) {
            if (!b.ok() || b.spec.run.schedule != Strategy::NoPipeline ||
                b.metrics->ledger.stages != m.ledger.stages || !same_point(b.spec, r.spec)) {
                continue;
            }
            if (base == nullptr || (b.spec.origin == r.spec.origin && base->spec.origin != r.spec.origin)) {
                base = &b;
            }
        }
        SpeedupRow row;
        row.run = r.spec.name;
        row.schedule = r.spec.run.schedule;
        row.stages = m.ledger.stages;
        row.micro_batches = r.spec.run.micro_batches();
        row.throughput_speedup = throughput_vs_nopipe(m.ledger);
        row.cycles_to_target = cycles_to_target(m, cfg);
        if (base != nullptr) {
            row.baseline = base->spec.name;
            row.baseline_cycles_to_target = cycles_to_target(*base->metrics, cfg);
            if (row.cycles_to_target && row.baseline_cycles_to_target && *row.cycles_to_target > 0) {
                row.time_speedup = static_cast<double>(*row.baseline_cycles_to_target) /
                                   static_cast<double>(*row.cycles_to_target);
            }
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

ResultBundle run_experiment(const ExperimentConfig& cfg, const ExperimentOptions& opts) {
    const std::vector<RunSpec> specs = expand_runs(cfg);
    ResultBundle bundle;
    bundle.out_dir = cfg.out_dir;
    bundle.runs.resize(specs.size());
    if (opts.write_files) {
        std::filesystem::create_directories(cfg.out_dir);
    }

    std::mutex log_mutex;
    const auto log = [&](const std::string& msg) {
        if (!opts.quiet) {
            std::lock_guard<std::mutex> lock(log_mutex);
            std::cerr << msg << '\n';
        }
    };

    std::atomic<std::size_t> next{0};
    const auto worker = [&]() {
        for (std::size_t i = next++; i < specs.size(); i = next++) {
            RunResult& res = bundle.runs[i];
            res.spec = specs[i];
            log("[" + std::to_string(i + 1) + "/" + std::to_string(specs.size()) + "] " + res.spec.name);
            try {
                const DataSource data = make_data(res.spec);
                res.spec.run = resolve_run(res.spec, data);
                res.metrics = run(res.spec.run, data);
            } catch (const std::exception& e) {
                res.error = e.what();
                log("run " + res.spec.name + " failed: " + res.error);
            }
            res.summary = run_summary(res, cfg);
            if (!opts.write_files) {
                continue;
            }
            try {
                res.json_path = cfg.out_dir / (res.spec.name + ".json");
                open_out(res.json_path) << res.summary.dump(2) << '\n';
                if (res.ok()) {
                    res.csv_path = cfg.out_dir / (res.spec.name + ".csv");
                    auto out = open_out(res.csv_path);
                    write_metrics_csv(out, *res.metrics);
                }
            } catch (const std::exception& e) {
                res.error = e.what();
                res.metrics.reset();
            }
        }
    };

    std::size_t threads = cfg.threads == 0 ? std::thread::hardware_concurrency() : cfg.threads;
    threads = std::max<std::size_t>(1, std::min(threads, specs.size()));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) {
            pool.emplace_back(worker);
        }
        for (auto& th : pool) {
            th.join();
        }
    }

    bundle.speedups = speedup_table(bundle.runs, cfg);
    if (opts.write_files) {
        nlohmann::json summary;
        summary["runs"] = nlohmann::json::array();
        for (const auto& r : bundle.runs) {
            summary["runs"].push_back(r.summary);
        }
        summary["speedups"] = nlohmann::json::array();
        for (const auto& row : bundle.speedups) {
            summary["speedups"].push_back({{"run", row.run},
                                           {"baseline", row.baseline.empty() ? nlohmann::json(nullptr)
                                                                             : nlohmann::json(row.baseline)},
                                           {"schedule", strategy_name(row.schedule)},
                                           {"M", row.stages},
                                           {"B", row.micro_batches},
                                           {"throughput_speedup", row.throughput_speedup},
                                           {"cycles_to_target", opt_json(row.cycles_to_target)},
                                           {"baseline_cycles_to_target", opt_json(row.baseline_cycles_to_target)},
                                           {"time_speedup", opt_json(row.time_speedup)}});
        }
        summary["target_loss"] = opt_json(cfg.target_loss);
        summary["target_accuracy"] = opt_json(cfg.target_accuracy);
        summary["all_ok"] = bundle.all_ok();
        bundle.summary_path = cfg.out_dir / "summary.json";
        open_out(bundle.summary_path) << summary.dump(2) << '\n';
        emit_plotdata(bundle);
    }
    return bundle;
}

void emit_plotdata(const ResultBundle& bundle) {
    auto by_epoch = open_out(bundle.out_dir / "accuracy_vs_epoch.csv");
    auto by_cycle = open_out(bundle.out_dir / "accuracy_vs_cycle.csv");
    by_epoch << "run,schedule,epoch,accuracy,eval_loss\n";
    by_cycle << "run,schedule,clock_cycle,accuracy,eval_loss\n";
    for (const auto& r : bundle.runs) {
        if (!r.ok()) {
            continue;
        }
        const RunMetrics& m = *r.metrics;
        const std::string sched = strategy_name(m.schedule);
        for (const auto& rec : m.records) {
            const double epoch = static_cast<double>(rec.samples_done) / static_cast<double>(m.dataset_size);
            by_epoch << r.spec.name << ',' << sched << ',' << num(epoch) << ',' << num(rec.accuracy) << ','
                     << num(rec.eval_loss) << '\n';
            by_cycle << r.spec.name << ',' << sched << ',' << rec.clock_cycle << ',' << num(rec.accuracy)
                     << ',' << num(rec.eval_loss) << '\n';
        }
    }

    auto speed = open_out(bundle.out_dir / "speedup_vs_stages.csv");
    speed << "run,schedule,M,B,throughput_speedup,time_speedup\n";
    for (const auto& row : bundle.speedups) {
        speed << row.run << ',' << strategy_name(row.schedule) << ',' << row.stages << ','
              << row.micro_batches << ',' << num(row.throughput_speedup) << ','
              << (row.time_speedup ? num(*row.time_speedup) : std::string()) << '\n';
    }
}

}  // namespace anapipe
