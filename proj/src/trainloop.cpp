// Copyright 2026 The anapipe Authors
// SPDX-License-Identifier: Apache-2.0

#include "anapipe/trainloop.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <string>

#include "anapipe/errors.hpp"

namespace anapipe {

namespace {

constexpr std::uint64_t kTagInit = 0x696e6974ULL;
constexpr std::uint64_t kTagNoise = 0x6e6f697365ULL;

bool same_bits(double a, double b) {
    return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b);
}

std::size_t argmax(const Vector& v) {
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

// Shared by the no-pipeline and synchronous strategies.
RunMetrics run_minibatch(const RunConfig& cfg, const DataSource& data, const RunHooks& hooks,
                         Strategy strategy) {
    detail::check_run_inputs(cfg, data);
    const std::uint32_t stages = cfg.stage_count();
    const std::size_t b = cfg.micro_batches();
    const std::uint64_t cycles_per_update = strategy == Strategy::NoPipeline
                                                ? cycles_no_pipeline(stages, b)
                                                : cycles_synchronous(stages, b);

    detail::MicroBatchStream stream(data.train, cfg.plan());
    const std::uint64_t total =
        cfg.steps > 0 ? cfg.steps : cfg.epochs * (stream.per_epoch() / b);
    if (total == 0) {
        throw ConfigError("run has no updates: dataset smaller than one mini-batch");
    }

    NetworkModel model = init_model(cfg);
    std::vector<std::mt19937_64> noise;
    for (std::uint32_t m = 1; m <= stages; ++m) {
        noise.push_back(detail::noise_rng(cfg.seed, m));
    }

    RunMetrics metrics;
    metrics.schedule = strategy;
    metrics.b_micro = cfg.b_micro;
    metrics.dataset_size = data.train.size();
    metrics.inv_tau = cfg.device.inv_tau;
    metrics.u_slack = cfg.u_slack;
    metrics.records.push_back(detail::make_record(model, data.eval, 0, 0, 0, std::nullopt));

    double loss_acc = 0.0;
    std::uint64_t loss_count = 0;
    std::vector<std::vector<Matrix>> grads(stages);
    for (std::uint64_t k = 0; k < total; ++k) {
        for (auto& g : grads) {
            g.clear();
        }
        std::uint64_t epoch = 0;
        double mb_loss = 0.0;
        for (std::size_t bi = 0; bi < b; ++bi) {
            auto item = stream.next();
            epoch = item.epoch;
            const auto batch = gather(data.train, item.indices);
            GradientResult gr = full_gradient(model, batch);
            mb_loss += gr.loss;
            for (std::uint32_t m = 0; m < stages; ++m) {
                grads[m].push_back(cfg.noise_sigma > 0.0
                                       ? inject_noise(gr.grads[m], cfg.noise_sigma, noise[m])
                                       : std::move(gr.grads[m]));
            }
        }
        loss_acc += mb_loss / static_cast<double>(b);
        ++loss_count;

        const double alpha = cfg.alpha_at_epoch(epoch);
        for (std::uint32_t m = 0; m < stages; ++m) {
            StageState& st = model.stages[m];
            st.weight = minibatch_analog_update(st.weight, grads[m], alpha, st.device);
            ++st.version;
            check_saturation(st.weight, st.device, metrics.device_stats,
                             "stage " + std::to_string(m + 1) + ", update " +
                                 std::to_string(st.version));
            if (hooks.on_update) {
                hooks.on_update(m + 1, st.version, st.weight);
            }
        }

        const std::uint64_t done = k + 1;
        if (detail::is_record_point(done, total, cfg.eval_every)) {
            metrics.records.push_back(detail::make_record(
                model, data.eval, done, done * cycles_per_update, done * cfg.b_mini,
                loss_acc / static_cast<double>(loss_count)));
            loss_acc = 0.0;
            loss_count = 0;
        }
    }

    metrics.updates = total;
    metrics.ledger = strategy == Strategy::NoPipeline ? ledger_no_pipeline(stages, total, b)
                                                      : ledger_synchronous(stages, total, b);
    metrics.ledger.check();
    metrics.final_weights = model.weights();
    return metrics;
}

}  // namespace

bool MetricRecord::operator==(const MetricRecord& o) const {
    return update_k == o.update_k && clock_cycle == o.clock_cycle &&
           same_bits(train_loss, o.train_loss) && same_bits(eval_loss, o.eval_loss) &&
           same_bits(grad_norm_sq, o.grad_norm_sq) && same_bits(accuracy, o.accuracy) &&
           same_bits(max_weight_inf, o.max_weight_inf) && samples_done == o.samples_done;
}

double RunConfig::alpha_at_epoch(std::uint64_t epoch) const {
    double a = alpha;
    for (std::uint64_t e : lr_decay_epochs) {
        if (epoch >= e) {
            a *= lr_decay_factor;
        }
    }
    return a;
}

void RunConfig::validate() const {
    if (stage_dims.size() < 2) {
        throw ConfigError("dims: need an input and at least one stage output");
    }
    for (std::size_t d : stage_dims) {
        if (d == 0) {
            throw ConfigError("dims: every dimension must be positive");
        }
    }
    // alpha = 0 is accepted: it freezes the network and is used as a check.
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
        throw ConfigError("alpha must be finite and non-negative");
    }
    BatchPlan{b_mini, b_micro, seed}.validate();
    if (epochs == 0 && steps == 0) {
        throw ConfigError("epochs or steps must be positive");
    }
    if (!(noise_sigma >= 0.0)) {
        throw ConfigError("noise_sigma must be non-negative");
    }
    if (eval_every == 0) {
        throw ConfigError("eval_every must be positive");
    }
    if (eval_batch == 0) {
        throw ConfigError("eval_batch must be positive");
    }
    if (!(init_scale >= 0.0)) {
        throw ConfigError("init_scale must be non-negative");
    }
    if (!(u_slack >= 0.0)) {
        throw ConfigError("u must be non-negative");
    }
    if (!(lr_decay_factor > 0.0)) {
        throw ConfigError("lr_decay_factor must be positive");
    }
    device.validate();
    if (!initial_weights.empty()) {
        if (initial_weights.size() != stage_count()) {
            throw ConfigError("initial_weights: one matrix per stage required");
        }
        for (std::size_t m = 0; m < initial_weights.size(); ++m) {
            if (initial_weights[m].rows() != stage_dims[m + 1] ||
                initial_weights[m].cols() != stage_dims[m]) {
                throw ConfigError("initial_weights: stage " + std::to_string(m + 1) +
                                  " has the wrong shape");
            }
        }
    }
}

std::vector<Sample> make_eval_batch(const Dataset& ds, std::size_t count) {
    const std::size_t n = std::min(count, ds.size());
    return {ds.samples.begin(), ds.samples.begin() + static_cast<std::ptrdiff_t>(n)};
}

double RunMetrics::final_loss() const {
    return records.empty() ? std::numeric_limits<double>::quiet_NaN() : records.back().eval_loss;
}

std::optional<double> RunMetrics::final_accuracy() const {
    if (records.empty() || std::isnan(records.back().accuracy)) {
        return std::nullopt;
    }
    return records.back().accuracy;
}

std::optional<std::uint64_t> RunMetrics::cycles_to_target_loss(double target) const {
    for (const auto& r : records) {
        if (r.eval_loss <= target) {
            return r.clock_cycle;
        }
    }
    return std::nullopt;
}

std::optional<std::uint64_t> RunMetrics::cycles_to_target_accuracy(double target) const {
    for (const auto& r : records) {
        if (!std::isnan(r.accuracy) && r.accuracy >= target) {
            return r.clock_cycle;
        }
    }
    return std::nullopt;
}

std::optional<double> RunMetrics::amplification_s() const {
    try {
        return amplification_factor(saturation_degree(), 0.0);
    } catch (const ConfigError&) {
        return std::nullopt;
    }
}

std::optional<double> RunMetrics::amplification_s_prime() const {
    try {
        return amplification_factor(saturation_degree(), u_slack);
    } catch (const ConfigError&) {
        return std::nullopt;
    }
}

double RunMetrics::amplification_s_linear() const {
    return amplification_factor_linear(device_stats.max_inf_norm_seen, inv_tau);
}

EvalResult eval_metrics(const NetworkModel& model, std::span<const Sample> eval_batch) {
    const GradientResult gr = full_gradient(model, eval_batch);
    EvalResult r;
    r.loss = gr.loss;
    for (const Matrix& g : gr.grads) {
        for (double v : g.values()) {
            r.grad_norm_sq += v * v;
        }
    }
    if (model.loss == LossKind::SoftmaxCrossEntropy) {
        std::size_t hits = 0;
        for (const Sample& s : eval_batch) {
            if (argmax(predict(model, s.x)) == argmax(s.y)) {
                ++hits;
            }
        }
        r.accuracy = static_cast<double>(hits) / static_cast<double>(eval_batch.size());
    }
    return r;
}

Matrix inject_noise(const Matrix& g, double sigma, std::mt19937_64& rng) {
    if (!(sigma >= 0.0)) {
        throw ConfigError("inject_noise: sigma must be non-negative");
    }
    if (sigma == 0.0) {
        return g;
    }
    std::normal_distribution<double> normal(0.0, sigma / std::sqrt(static_cast<double>(g.size())));
    Matrix out = g;
    for (double& v : out.values()) {
        v += normal(rng);
    }
    return out;
}

NetworkModel init_model(const RunConfig& cfg) {
    NetworkModel model;
    model.loss = cfg.loss;
    const std::uint32_t stages = cfg.stage_count();
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                      static_cast<std::uint32_t>(kTagInit), static_cast<std::uint32_t>(kTagInit >> 32)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::uint32_t m = 0; m < stages; ++m) {
        StageState st;
        if (!cfg.initial_weights.empty()) {
            st.weight = cfg.initial_weights[m];
        } else {
            st.weight = Matrix(cfg.stage_dims[m + 1], cfg.stage_dims[m]);
            const double sd = cfg.init_scale / std::sqrt(static_cast<double>(cfg.stage_dims[m]));
            for (double& v : st.weight.values()) {
                v = sd * normal(rng);
            }
        }
        st.activation = (m + 1 == stages) ? cfg.last_activation : cfg.activation;
        st.device = cfg.device;
        model.stages.push_back(std::move(st));
    }
    model.validate();
    return model;
}

RunMetrics run_no_pipeline(const RunConfig& cfg, const DataSource& data, const RunHooks& hooks) {
    return run_minibatch(cfg, data, hooks, Strategy::NoPipeline);
}

RunMetrics run_synchronous(const RunConfig& cfg, const DataSource& data, const RunHooks& hooks) {
    return run_minibatch(cfg, data, hooks, Strategy::Synchronous);
}

RunMetrics run(const RunConfig& cfg, const DataSource& data, const RunHooks& hooks) {
    switch (cfg.schedule) {
        case Strategy::NoPipeline:
            return run_no_pipeline(cfg, data, hooks);
        case Strategy::Synchronous:
            return run_synchronous(cfg, data, hooks);
        case Strategy::Asynchronous:
            return run_async_eventdriven(cfg, data, hooks);
    }
    throw ConfigError("unknown schedule");
}

namespace detail {

std::mt19937_64 noise_rng(std::uint64_t seed, std::uint32_t stage) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(kTagNoise), static_cast<std::uint32_t>(kTagNoise >> 32),
                      stage};
    return std::mt19937_64(seq);
}

MicroBatchStream::MicroBatchStream(const Dataset& ds, const BatchPlan& plan)
    : ds_(&ds), plan_(plan), per_epoch_(plan.minibatches_per_epoch(ds.size()) * plan.micro_batches()) {
    plan_.validate();
    if (per_epoch_ == 0) {
        throw ConfigError("dataset of " + std::to_string(ds.size()) +
                          " samples is smaller than one mini-batch of " +
                          std::to_string(plan.b_mini));
    }
}

MicroBatchStream::Item MicroBatchStream::next() {
    if (current_.empty() || pos_ == current_.size()) {
        if (!current_.empty()) {
            ++epoch_;
        }
        current_ = batch_iterator(*ds_, plan_, epoch_);
        pos_ = 0;
    }
    return {current_[pos_++], epoch_};
}

std::uint64_t async_updates(const RunConfig& cfg, std::size_t dataset_size) {
    if (cfg.steps > 0) {
        return cfg.steps;
    }
    return cfg.epochs * cfg.plan().minibatches_per_epoch(dataset_size) * cfg.micro_batches();
}

bool is_record_point(std::uint64_t k, std::uint64_t total, std::uint64_t eval_every) {
    return k == 0 || k == total || k % eval_every == 0;
}

MetricRecord make_record(const NetworkModel& model, std::span<const Sample> eval,
                         std::uint64_t update_k, std::uint64_t cycle, std::uint64_t samples_done,
                         std::optional<double> train_loss) {
    const EvalResult e = eval_metrics(model, eval);
    MetricRecord r;
    r.update_k = update_k;
    r.clock_cycle = cycle;
    r.eval_loss = e.loss;
    r.train_loss = train_loss.value_or(e.loss);
    r.grad_norm_sq = e.grad_norm_sq;
    r.accuracy = e.accuracy.value_or(std::numeric_limits<double>::quiet_NaN());
    for (const auto& st : model.stages) {
        r.max_weight_inf = std::max(r.max_weight_inf, norms(st.weight).inf);
    }
    r.samples_done = samples_done;
    return r;
}

void check_run_inputs(const RunConfig& cfg, const DataSource& data) {
    cfg.validate();
    data.train.validate();
    if (data.train.feature_dim != cfg.stage_dims.front()) {
        throw ConfigError("dims: input dimension " + std::to_string(cfg.stage_dims.front()) +
                          " does not match dataset feature dimension " +
                          std::to_string(data.train.feature_dim));
    }
    if (data.train.label_dim != cfg.stage_dims.back()) {
        throw ConfigError("dims: output dimension " + std::to_string(cfg.stage_dims.back()) +
                          " does not match dataset label dimension " +
                          std::to_string(data.train.label_dim));
    }
    if (data.eval.empty()) {
        throw ConfigError("evaluation batch is empty");
    }
}

}  // namespace detail

}  // namespace anapipe
