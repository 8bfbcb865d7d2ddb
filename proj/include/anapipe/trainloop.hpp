// Copyright 2026 The anapipe Authors
// SPDX-License-Identifier: Apache-2.0
//
// Training runs under the three execution strategies.
//
// No-pipeline and synchronous runs share their weight dynamics: every
// micro-batch gradient of a mini-batch is taken at W_k and the device then
// applies the B micro-batch increments (minibatch_analog_update). They differ
// only in the clock cycles charged per mini-batch.
//
// The asynchronous run is event driven. Each stage holds exactly one weight
// matrix that is mutated in place by its backward events; the stale forward
// weights of the pipeline are never stored, they simply are whatever the stage
// holds when the forward event fires. run_async_reference replays the same
// dynamics datum by datum with explicit weight snapshots and exists as a test
// oracle for the event-driven engine.

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "anapipe/analogdev.hpp"
#include "anapipe/netmodel.hpp"
#include "anapipe/pipesched.hpp"
#include "anapipe/synthdata.hpp"

namespace anapipe {

struct RunConfig {
    Strategy schedule = Strategy::Asynchronous;
    // d_0 (input) .. d_M (output); M = stage_dims.size() - 1.
    std::vector<std::size_t> stage_dims;
    ActivationKind activation = ActivationKind::tanh();
    ActivationKind last_activation = ActivationKind::identity();
    LossKind loss = LossKind::Mse;
    DeviceConfig device;
    // Step per update event: per mini-batch for nopipe/sync (alpha/B per
    // micro-batch), per micro-batch for async.
    double alpha = 0.1;
    std::uint64_t epochs = 1;
    // When non-zero, the run length in updates (mini-batches for nopipe/sync,
    // micro-batches for async) and epochs is ignored.
    std::uint64_t steps = 0;
    std::size_t b_mini = 1;
    std::size_t b_micro = 1;
    // Total standard deviation of the Gaussian noise added to every stage
    // increment before it reaches the device.
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;
    std::uint64_t eval_every = 50;
    std::size_t eval_batch = 256;
    // Initial weights are N(0, init_scale^2 / fan_in).
    double init_scale = 1.0;
    // Multiply alpha by lr_decay_factor at the start of each listed epoch.
    std::vector<std::uint64_t> lr_decay_epochs;
    double lr_decay_factor = 0.1;
    // Slack u of the asynchronous amplification factor S'.
    double u_slack = 1.0;
    // Overrides the seeded initialisation when non-empty.
    std::vector<Matrix> initial_weights;

    std::uint32_t stage_count() const {
        return stage_dims.empty() ? 0 : static_cast<std::uint32_t>(stage_dims.size() - 1);
    }
    std::size_t micro_batches() const { return b_micro == 0 ? 0 : b_mini / b_micro; }
    BatchPlan plan() const { return {b_mini, b_micro, seed}; }
    double alpha_at_epoch(std::uint64_t epoch) const;

    /// Throws ConfigError on inconsistent settings.
    void validate() const;

    bool operator==(const RunConfig&) const = default;
};

struct DataSource {
    Dataset train;
    // Fixed held-out batch for loss / gradient-norm / accuracy records.
    std::vector<Sample> eval;
};

/// The first `count` samples of `ds` (or all of them) as an evaluation batch.
std::vector<Sample> make_eval_batch(const Dataset& ds, std::size_t count);

struct InFlightSlot {
    std::uint64_t datum = 0;
    std::uint32_t stage = 0;
    std::vector<Vector> x_in;
    std::vector<Vector> gprime;
};

struct MetricRecord {
    std::uint64_t update_k = 0;
    std::uint64_t clock_cycle = 0;
    // Mean training loss of the micro-batches consumed since the previous
    // record, as seen by the forward pass. The k = 0 record repeats eval_loss.
    double train_loss = 0.0;
    double eval_loss = 0.0;
    double grad_norm_sq = 0.0;
    // NaN unless the loss is softmax cross-entropy.
    double accuracy = 0.0;
    double max_weight_inf = 0.0;
    std::uint64_t samples_done = 0;

    bool operator==(const MetricRecord&) const;
};

struct RunMetrics {
    Strategy schedule = Strategy::Asynchronous;
    std::vector<MetricRecord> records;
    CycleLedger ledger;
    UpdateStats device_stats;
    // Updates applied to every stage.
    std::uint64_t updates = 0;
    // Forward events whose observed weight version was checked against
    // forward_version(); equals K * M for an asynchronous run.
    std::uint64_t staleness_checks = 0;
    std::size_t b_micro = 1;
    std::size_t dataset_size = 0;
    double inv_tau = 0.0;
    double u_slack = 1.0;
    std::vector<Matrix> final_weights;

    double final_loss() const;
    std::optional<double> final_accuracy() const;
    std::uint64_t samples_total() const { return ledger.samples_completed * b_micro; }
    double density() const { return measured_density(ledger); }

    /// Clock cycle of the first record whose eval loss is <= target.
    std::optional<std::uint64_t> cycles_to_target_loss(double target) const;
    /// Clock cycle of the first record whose accuracy is >= target.
    std::optional<std::uint64_t> cycles_to_target_accuracy(double target) const;

    /// Largest saturation degree seen across stages and updates.
    double saturation_degree() const { return device_stats.max_degree_seen; }
    /// S, or nullopt when the degree is too large for the bound.
    std::optional<double> amplification_s() const;
    /// S' with the run's u_slack.
    std::optional<double> amplification_s_prime() const;
    /// S in its linear-numerator form.
    double amplification_s_linear() const;
};

/// Observation points for tests and traces. Both asynchronous engines invoke
/// them at the same logical points so their streams can be compared.
struct RunHooks {
    // (datum k, stage m, version observed by the forward read)
    std::function<void(std::uint64_t, std::uint32_t, std::uint64_t)> on_forward;
    // (stage m, new version, weight after the update)
    std::function<void(std::uint32_t, std::uint64_t, const Matrix&)> on_update;
};

struct EvalResult {
    double loss = 0.0;
    double grad_norm_sq = 0.0;
    std::optional<double> accuracy;
};

/// Loss, squared norm of the stacked gradient, and (for softmax
/// cross-entropy) classification accuracy over a fixed batch.
EvalResult eval_metrics(const NetworkModel& model, std::span<const Sample> eval_batch);

/// Adds zero-mean Gaussian noise of total variance sigma^2, split evenly over
/// the entries (per-entry variance sigma^2 / numel).
Matrix inject_noise(const Matrix& g, double sigma, std::mt19937_64& rng);

/// Seeded initial model for a run configuration.
NetworkModel init_model(const RunConfig& cfg);

RunMetrics run_no_pipeline(const RunConfig& cfg, const DataSource& data, const RunHooks& hooks = {});
RunMetrics run_synchronous(const RunConfig& cfg, const DataSource& data, const RunHooks& hooks = {});
RunMetrics run_async_eventdriven(const RunConfig& cfg, const DataSource& data,
                                 const RunHooks& hooks = {});
RunMetrics run_async_reference(const RunConfig& cfg, const DataSource& data,
                               const RunHooks& hooks = {});

/// Dispatches on cfg.schedule (the event-driven engine for async).
RunMetrics run(const RunConfig& cfg, const DataSource& data, const RunHooks& hooks = {});

namespace detail {

std::mt19937_64 noise_rng(std::uint64_t seed, std::uint32_t stage);

/// Micro-batches in training order across epochs.
class MicroBatchStream {
public:
    MicroBatchStream(const Dataset& ds, const BatchPlan& plan);

    struct Item {
        MicroBatch indices;
        std::uint64_t epoch = 0;
    };
    Item next();
    std::size_t per_epoch() const noexcept { return per_epoch_; }

private:
    const Dataset* ds_;
    BatchPlan plan_;
    std::size_t per_epoch_;
    std::uint64_t epoch_ = 0;
    std::size_t pos_ = 0;
    std::vector<MicroBatch> current_;
};

/// Number of asynchronous updates K for a configuration.
std::uint64_t async_updates(const RunConfig& cfg, std::size_t dataset_size);

bool is_record_point(std::uint64_t k, std::uint64_t total, std::uint64_t eval_every);

MetricRecord make_record(const NetworkModel& model, std::span<const Sample> eval,
                         std::uint64_t update_k, std::uint64_t cycle, std::uint64_t samples_done,
                         std::optional<double> train_loss);

void check_run_inputs(const RunConfig& cfg, const DataSource& data);

}  // namespace detail

}  // namespace anapipe
