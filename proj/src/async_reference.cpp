// Copyright 2026 The anapipe Authors
// SPDX-License-Identifier: Apache-2.0
//
// Data-perspective replay of the asynchronous pipeline. Each datum runs its
// full forward and backward before the next one starts; the forward at stage m
// reads a stored copy of weight version max(k - (M - m), 0). This is only
// possible because the simulator can keep weight snapshots, which analog tiles
// cannot; it serves as the oracle for run_async_eventdriven.

#include <deque>
#include <string>

#include "anapipe/errors.hpp"
#include "anapipe/trainloop.hpp"

namespace anapipe {

namespace {

// Last few versions of one stage's weight.
class VersionRing {
public:
    explicit VersionRing(Matrix w0) { versions_.push_back(std::move(w0)); }

    const Matrix& at(std::uint64_t version) const {
        if (version < base_ || version >= base_ + versions_.size()) {
            throw InvariantViolation("reference: weight version " + std::to_string(version) +
                                     " no longer stored");
        }
        return versions_[version - base_];
    }

    void push(Matrix w) { versions_.push_back(std::move(w)); }

    void drop_below(std::uint64_t version) {
        while (base_ < version && versions_.size() > 1) {
            versions_.pop_front();
            ++base_;
        }
    }

    std::size_t depth() const noexcept { return versions_.size(); }

private:
    std::deque<Matrix> versions_;
    std::uint64_t base_ = 0;
};

}  // namespace

RunMetrics run_async_reference(const RunConfig& cfg, const DataSource& data, const RunHooks& hooks) {
    detail::check_run_inputs(cfg, data);
    const std::uint32_t stages = cfg.stage_count();
    const std::uint64_t total = detail::async_updates(cfg, data.train.size());
    if (total == 0) {
        throw ConfigError("run has no updates: dataset smaller than one mini-batch");
    }

    NetworkModel model = init_model(cfg);
    detail::MicroBatchStream stream(data.train, cfg.plan());
    std::vector<std::mt19937_64> noise;
    std::vector<VersionRing> rings;
    for (std::uint32_t m = 1; m <= stages; ++m) {
        noise.push_back(detail::noise_rng(cfg.seed, m));
        rings.emplace_back(model.stages[m - 1].weight);
    }

    RunMetrics metrics;
    metrics.schedule = Strategy::Asynchronous;
    metrics.b_micro = cfg.b_micro;
    metrics.dataset_size = data.train.size();
    metrics.inv_tau = cfg.device.inv_tau;
    metrics.u_slack = cfg.u_slack;
    metrics.records.push_back(detail::make_record(model, data.eval, 0, 0, 0, std::nullopt));

    double loss_acc = 0.0;
    std::uint64_t since_record = 0;
    for (std::uint64_t k = 0; k < total; ++k) {
        const auto item = stream.next();
        const double alpha = cfg.alpha_at_epoch(item.epoch);
        const auto batch = gather(data.train, item.indices);
        const std::size_t n = batch.size();

        // Forward with delayed weights.
        std::vector<std::vector<Vector>> x_in(stages);
        std::vector<std::vector<Vector>> gprime(stages);
        std::vector<Vector> outputs;
        std::vector<Vector> z_last;
        for (const Sample& s : batch) {
            outputs.push_back(s.x);
        }
        for (std::uint32_t m = 1; m <= stages; ++m) {
            const std::uint64_t v = forward_version(k, m, stages);
            ++metrics.staleness_checks;
            if (hooks.on_forward) {
                hooks.on_forward(k, m, v);
            }
            const Matrix& w_delayed = rings[m - 1].at(v);
            for (std::size_t s = 0; s < n; ++s) {
                StageForward f = forward_stage(w_delayed, model.stages[m - 1].activation, outputs[s]);
                x_in[m - 1].push_back(std::move(outputs[s]));
                gprime[m - 1].push_back(std::move(f.gprime));
                outputs[s] = std::move(f.x_out);
                if (m == stages) {
                    z_last.push_back(std::move(f.z));
                }
            }
        }

        std::vector<Vector> deltas;
        double loss = 0.0;
        for (std::size_t s = 0; s < n; ++s) {
            LossHead head = loss_head(outputs[s], z_last[s], batch[s].y, model.loss,
                                      model.stages.back().activation);
            loss += head.loss;
            deltas.push_back(std::move(head.delta));
        }
        loss_acc += loss / static_cast<double>(n);
        ++since_record;

        // Backward with the latest weights, updating as we go.
        for (std::uint32_t m = stages; m >= 1; --m) {
            StageState& st = model.stages[m - 1];
            Matrix g = microbatch_gradient(deltas, x_in[m - 1]);
            std::vector<Vector> upstream;
            if (m > 1) {
                for (const Vector& d : deltas) {
                    upstream.push_back(vecmat(d, st.weight));
                }
            }
            if (cfg.noise_sigma > 0.0) {
                g = inject_noise(g, cfg.noise_sigma, noise[m - 1]);
            }
            analog_update_in_place(st.weight, g, alpha, st.device);
            ++st.version;
            check_saturation(st.weight, st.device, metrics.device_stats,
                             "stage " + std::to_string(m) + ", update " + std::to_string(st.version));
            if (hooks.on_update) {
                hooks.on_update(m, st.version, st.weight);
            }
            rings[m - 1].push(st.weight);
            rings[m - 1].drop_below(forward_version(k + 1, m, stages));
            if (rings[m - 1].depth() > stages - m + 1) {
                throw InvariantViolation("reference: snapshot ring deeper than the pipeline delay");
            }
            if (m > 1) {
                deltas.clear();
                for (std::size_t s = 0; s < n; ++s) {
                    deltas.push_back(hadamard(upstream[s], gprime[m - 2][s]));
                }
            }
        }

        const std::uint64_t done = k + 1;
        if (detail::is_record_point(done, total, cfg.eval_every)) {
            const std::uint64_t cycle = async_backward_cycle(k, 1, stages) + 1;
            metrics.records.push_back(detail::make_record(
                model, data.eval, done, cycle, done * cfg.b_micro,
                loss_acc / static_cast<double>(since_record)));
            loss_acc = 0.0;
            since_record = 0;
        }
    }

    metrics.updates = total;
    metrics.ledger = ledger_asynchronous(stages, total);
    metrics.ledger.check();
    metrics.final_weights = model.weights();
    return metrics;
}

}  // namespace anapipe
