// Copyright 2026 The anapipe Authors
// SPDX-License-Identifier: Apache-2.0
//
// Event-driven asynchronous pipeline.
//
// Events run in (cycle, stage) order. A stage only ever touches its own weight;
// everything else travels as messages that are consumed one cycle later:
//
//   Forward(k, m)   reads the stage weight as it is right now, stashes the
//                   input and g'(z) in an InFlightSlot, passes g(z) on. The
//                   last stage also evaluates the loss head and queues
//                   delta_M for its own backward event.
//   Backward(k, m)  forms delta_m from the incoming message and the stashed
//                   g'(z), sends delta_m W_m (pre-update weight) upstream,
//                   then applies the device update with the micro-batch mean
//                   of delta_m (x) x_m.

#include <deque>
#include <map>
#include <optional>
#include <string>

#include "anapipe/errors.hpp"
#include "anapipe/trainloop.hpp"

namespace anapipe {

namespace {

struct Message {
    std::uint64_t datum = 0;
    std::vector<Vector> values;
};

template <typename T>
T take_front(std::deque<T>& q, std::uint64_t datum, const char* what, std::uint32_t stage) {
    if (q.empty() || q.front().datum != datum) {
        throw InvariantViolation(std::string("async engine: missing ") + what + " for datum " +
                                 std::to_string(datum) + " at stage " + std::to_string(stage));
    }
    T v = std::move(q.front());
    q.pop_front();
    return v;
}

}  // namespace

RunMetrics run_async_eventdriven(const RunConfig& cfg, const DataSource& data, const RunHooks& hooks) {
    detail::check_run_inputs(cfg, data);
    const std::uint32_t stages = cfg.stage_count();
    const std::uint64_t total = detail::async_updates(cfg, data.train.size());
    if (total == 0) {
        throw ConfigError("run has no updates: dataset smaller than one mini-batch");
    }

    NetworkModel model = init_model(cfg);
    detail::MicroBatchStream stream(data.train, cfg.plan());
    std::vector<std::mt19937_64> noise;
    for (std::uint32_t m = 1; m <= stages; ++m) {
        noise.push_back(detail::noise_rng(cfg.seed, m));
    }

    RunMetrics metrics;
    metrics.schedule = Strategy::Asynchronous;
    metrics.b_micro = cfg.b_micro;
    metrics.dataset_size = data.train.size();
    metrics.inv_tau = cfg.device.inv_tau;
    metrics.u_slack = cfg.u_slack;
    metrics.records.push_back(detail::make_record(model, data.eval, 0, 0, 0, std::nullopt));

    // Index 1..M; slot 0 unused.
    std::vector<std::deque<InFlightSlot>> stash(stages + 1);
    std::vector<std::deque<Message>> fwd_inbox(stages + 1);
    std::vector<std::deque<Message>> bwd_inbox(stages + 1);
    // Micro-batches between their first forward and their loss head.
    std::deque<std::pair<std::uint64_t, MicroBatch>> entering;
    std::vector<double> datum_loss(total, 0.0);
    std::vector<double> datum_alpha(total, 0.0);
    // Copies of each stage's weight at record versions, for evaluating a
    // consistent W_k once stage 1 (always the last to reach version k) gets there.
    std::map<std::uint64_t, std::vector<std::optional<Matrix>>> pending_eval;
    std::uint64_t last_record = 0;

    auto forward = [&](std::uint64_t k, std::uint32_t m) {
        StageState& st = model.stages[m - 1];
        const std::uint64_t expected = forward_version(k, m, stages);
        if (st.version != expected) {
            throw InvariantViolation("staleness law violated: forward of datum " + std::to_string(k) +
                                     " at stage " + std::to_string(m) + " observed version " +
                                     std::to_string(st.version) + ", expected " +
                                     std::to_string(expected));
        }
        ++metrics.staleness_checks;
        if (hooks.on_forward) {
            hooks.on_forward(k, m, st.version);
        }

        Message in;
        if (m == 1) {
            auto item = stream.next();
            datum_alpha[k] = cfg.alpha_at_epoch(item.epoch);
            in.datum = k;
            for (std::size_t idx : item.indices) {
                in.values.push_back(data.train.samples[idx].x);
            }
            entering.emplace_back(k, std::move(item.indices));
        } else {
            in = take_front(fwd_inbox[m], k, "forward input", m);
        }

        InFlightSlot slot;
        slot.datum = k;
        slot.stage = m;
        Message out{k, {}};
        std::vector<Vector> z_last;
        for (Vector& x : in.values) {
            StageForward f = forward_stage(st, x);
            slot.gprime.push_back(std::move(f.gprime));
            slot.x_in.push_back(std::move(x));
            out.values.push_back(std::move(f.x_out));
            if (m == stages) {
                z_last.push_back(std::move(f.z));
            }
        }
        stash[m].push_back(std::move(slot));

        if (m < stages) {
            fwd_inbox[m + 1].push_back(std::move(out));
            return;
        }
        auto [datum, indices] = std::move(entering.front());
        entering.pop_front();
        if (datum != k) {
            throw InvariantViolation("async engine: loss head out of order");
        }
        Message delta{k, {}};
        double loss = 0.0;
        for (std::size_t s = 0; s < indices.size(); ++s) {
            LossHead head = loss_head(out.values[s], z_last[s], data.train.samples[indices[s]].y,
                                      model.loss, st.activation);
            loss += head.loss;
            delta.values.push_back(std::move(head.delta));
        }
        datum_loss[k] = loss / static_cast<double>(indices.size());
        bwd_inbox[m].push_back(std::move(delta));
    };

    auto backward = [&](std::uint64_t k, std::uint32_t m) {
        StageState& st = model.stages[m - 1];
        InFlightSlot slot = take_front(stash[m], k, "in-flight slot", m);
        Message in = take_front(bwd_inbox[m], k, "backward error", m);

        std::vector<Vector> deltas;
        deltas.reserve(in.values.size());
        for (std::size_t s = 0; s < in.values.size(); ++s) {
            deltas.push_back(m == stages ? std::move(in.values[s]) : hadamard(in.values[s], slot.gprime[s]));
        }
        Matrix g = microbatch_gradient(deltas, slot.x_in);
        if (m > 1) {
            Message up{k, {}};
            for (const Vector& d : deltas) {
                up.values.push_back(vecmat(d, st.weight));
            }
            bwd_inbox[m - 1].push_back(std::move(up));
        }
        if (cfg.noise_sigma > 0.0) {
            g = inject_noise(g, cfg.noise_sigma, noise[m - 1]);
        }
        analog_update_in_place(st.weight, g, datum_alpha[k], st.device);
        ++st.version;
        check_saturation(st.weight, st.device, metrics.device_stats,
                         "stage " + std::to_string(m) + ", update " + std::to_string(st.version));
        if (hooks.on_update) {
            hooks.on_update(m, st.version, st.weight);
        }

        const std::uint64_t v = st.version;
        if (!detail::is_record_point(v, total, cfg.eval_every)) {
            return;
        }
        auto& snap = pending_eval[v];
        snap.resize(stages);
        snap[m - 1] = st.weight;
        if (m != 1) {
            return;
        }
        NetworkModel frozen = model;
        for (std::uint32_t i = 0; i < stages; ++i) {
            if (!snap[i]) {
                throw InvariantViolation("async engine: stage " + std::to_string(i + 1) +
                                         " had not reached version " + std::to_string(v) +
                                         " when stage 1 did");
            }
            frozen.stages[i].weight = std::move(*snap[i]);
            frozen.stages[i].version = v;
        }
        pending_eval.erase(v);
        double loss_sum = 0.0;
        for (std::uint64_t j = last_record; j < v; ++j) {
            loss_sum += datum_loss[j];
        }
        const double train_loss = loss_sum / static_cast<double>(v - last_record);
        last_record = v;
        const std::uint64_t cycle = async_backward_cycle(v - 1, 1, stages) + 1;
        metrics.records.push_back(
            detail::make_record(frozen, data.eval, v, cycle, v * cfg.b_micro, train_loss));
    };

    for (const ScheduleEvent& e : async_event_stream(stages, total)) {
        if (e.kind == EventKind::Forward) {
            forward(e.datum, e.stage);
        } else {
            backward(e.datum, e.stage);
        }
    }

    for (std::uint32_t m = 1; m <= stages; ++m) {
        if (!stash[m].empty() || !fwd_inbox[m].empty() || !bwd_inbox[m].empty() ||
            model.stages[m - 1].version != total) {
            throw InvariantViolation("async engine: pipeline not drained at stage " + std::to_string(m));
        }
    }

    metrics.updates = total;
    metrics.ledger = ledger_asynchronous(stages, total);
    metrics.ledger.check();
    metrics.final_weights = model.weights();
    return metrics;
}

}  // namespace anapipe
