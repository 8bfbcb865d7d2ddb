// Copyright 2026 The anapipe Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <map>
#include <random>
#include <tuple>

#include "doctest.h"

#include "anapipe/errors.hpp"
#include "anapipe/trainloop.hpp"

using namespace anapipe;

namespace {

DataSource teacher_data(std::uint64_t seed, std::size_t n, std::size_t d, std::size_t out = 1) {
    TeacherSpec t;
    t.output_dim = out;
    DataSource src;
    src.train = gen_teacher_regression(seed, n, d, t);
    src.eval = make_eval_batch(src.train, 64);
    return src;
}

DataSource mixture_data(std::uint64_t seed, std::size_t n, std::size_t d, std::size_t classes) {
    DataSource src;
    src.train = gen_gaussian_mixture(seed, n, d, classes);
    src.eval = make_eval_batch(src.train, 64);
    return src;
}

RunConfig base_config(Strategy s, std::vector<std::size_t> dims) {
    RunConfig c;
    c.schedule = s;
    c.stage_dims = std::move(dims);
    c.alpha = 0.05;
    c.eval_every = 10;
    return c;
}

struct Trace {
    // stage -> weights after each update, in version order
    std::map<std::uint32_t, std::vector<Matrix>> updates;
    // (datum, stage) -> observed version
    std::map<std::pair<std::uint64_t, std::uint32_t>, std::uint64_t> forwards;

    RunHooks hooks() {
        RunHooks h;
        h.on_update = [this](std::uint32_t m, std::uint64_t v, const Matrix& w) {
            auto& list = updates[m];
            CHECK(list.size() + 1 == v);
            list.push_back(w);
        };
        h.on_forward = [this](std::uint64_t k, std::uint32_t m, std::uint64_t v) { forwards[{k, m}] = v; };
        return h;
    }
};

// Textbook mini-batch SGD for a tanh network with a linear head and MSE,
// written without the library's forward/backward helpers.
std::vector<Matrix> textbook_sgd(std::vector<Matrix> w, const Dataset& ds, const BatchPlan& plan,
                                 std::uint64_t updates, double alpha) {
    const std::size_t stages = w.size();
    std::uint64_t done = 0;
    for (std::uint64_t epoch = 0; done < updates; ++epoch) {
        const auto perm = epoch_permutation(ds.size(), plan.seed, epoch);
        const std::size_t per_epoch = ds.size() / plan.b_mini;
        for (std::size_t mb = 0; mb < per_epoch && done < updates; ++mb, ++done) {
            std::vector<Matrix> grad;
            for (const auto& wm : w) {
                grad.emplace_back(wm.rows(), wm.cols());
            }
            for (std::size_t s = 0; s < plan.b_mini; ++s) {
                const Sample& smp = ds.samples[perm[mb * plan.b_mini + s]];
                std::vector<std::vector<double>> act{std::vector<double>(smp.x.begin(), smp.x.end())};
                for (std::size_t m = 0; m < stages; ++m) {
                    std::vector<double> next(w[m].rows(), 0.0);
                    for (std::size_t i = 0; i < w[m].rows(); ++i) {
                        for (std::size_t j = 0; j < w[m].cols(); ++j) {
                            next[i] += w[m](i, j) * act[m][j];
                        }
                        if (m + 1 < stages) {
                            next[i] = std::tanh(next[i]);
                        }
                    }
                    act.push_back(next);
                }
                std::vector<double> delta(act.back().size());
                for (std::size_t i = 0; i < delta.size(); ++i) {
                    delta[i] = act.back()[i] - smp.y[i];
                }
                for (std::size_t m = stages; m-- > 0;) {
                    for (std::size_t i = 0; i < w[m].rows(); ++i) {
                        for (std::size_t j = 0; j < w[m].cols(); ++j) {
                            grad[m](i, j) += delta[i] * act[m][j];
                        }
                    }
                    if (m == 0) {
                        break;
                    }
                    std::vector<double> up(w[m].cols(), 0.0);
                    for (std::size_t j = 0; j < w[m].cols(); ++j) {
                        for (std::size_t i = 0; i < w[m].rows(); ++i) {
                            up[j] += delta[i] * w[m](i, j);
                        }
                        up[j] *= 1.0 - act[m][j] * act[m][j];
                    }
                    delta = up;
                }
            }
            for (std::size_t m = 0; m < stages; ++m) {
                for (std::size_t i = 0; i < w[m].size(); ++i) {
                    w[m].values()[i] -= alpha * grad[m].values()[i] / static_cast<double>(plan.b_mini);
                }
            }
        }
    }
    return w;
}

}  // namespace

TEST_SUITE("trainloop") {

TEST_CASE("config validation") {
    RunConfig c = base_config(Strategy::Synchronous, {4, 3, 1});
    CHECK_NOTHROW(c.validate());
    c.b_mini = 10;
    c.b_micro = 3;
    CHECK_THROWS_WITH_AS(c.validate(), "B_mini not divisible by B_micro", ConfigError);
    c = base_config(Strategy::Synchronous, {4});
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = base_config(Strategy::Synchronous, {4, 0, 1});
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = base_config(Strategy::Synchronous, {4, 1});
    c.alpha = -1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c.alpha = 0.1;
    c.initial_weights = {Matrix(2, 2)};
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("mismatched data dimensions are rejected") {
    const auto data = teacher_data(1, 64, 5);
    RunConfig c = base_config(Strategy::Asynchronous, {4, 1});
    CHECK_THROWS_AS(run(c, data), ConfigError);
    c.stage_dims = {5, 2};
    CHECK_THROWS_AS(run(c, data), ConfigError);
}

TEST_CASE("learning-rate step decay") {
    RunConfig c;
    c.alpha = 1.0;
    c.lr_decay_epochs = {2, 5};
    CHECK(c.alpha_at_epoch(0) == 1.0);
    CHECK(c.alpha_at_epoch(2) == 0.1);
    CHECK(c.alpha_at_epoch(6) == doctest::Approx(0.01));
}

TEST_CASE("inject_noise") {
    std::mt19937_64 rng(99);
    const Matrix g{{1.0, -2.0}, {0.5, 3.0}};
    CHECK(inject_noise(g, 0.0, rng) == g);
    CHECK_THROWS_AS(inject_noise(g, -1.0, rng), ConfigError);

    const double sigma = 0.7;
    const int draws = 100000;
    Matrix mean(2, 2);
    double total_var = 0.0;
    for (int i = 0; i < draws; ++i) {
        const Matrix n = inject_noise(g, sigma, rng);
        for (std::size_t j = 0; j < 4; ++j) {
            const double e = n.values()[j] - g.values()[j];
            mean.values()[j] += n.values()[j] / draws;
            total_var += e * e / draws;
        }
    }
    for (std::size_t j = 0; j < 4; ++j) {
        CHECK(std::fabs(mean.values()[j] - g.values()[j]) <= 3.0 * sigma / std::sqrt(double(draws)));
    }
    CHECK(std::fabs(total_var - sigma * sigma) <= 0.05 * sigma * sigma);
}

TEST_CASE("eval_metrics") {
    const auto data = teacher_data(2, 32, 4, 2);
    RunConfig c = base_config(Strategy::Synchronous, {4, 5, 2});
    const NetworkModel m = init_model(c);
    const auto e = eval_metrics(m, data.eval);
    const auto g = full_gradient(m, data.eval);
    double sq = 0.0;
    for (const auto& gm : g.grads) {
        for (double v : gm.values()) {
            sq += v * v;
        }
    }
    CHECK(e.loss == g.loss);
    CHECK(e.grad_norm_sq == sq);
    CHECK_FALSE(e.accuracy.has_value());

    std::vector<Sample> fit(data.eval.begin(), data.eval.begin() + 8);
    for (auto& s : fit) {
        s.y = predict(m, s.x);
    }
    CHECK(eval_metrics(m, fit).grad_norm_sq <= 1e-12);

    const auto cls = mixture_data(3, 40, 4, 2);
    c.stage_dims = {4, 2};
    c.loss = LossKind::SoftmaxCrossEntropy;
    const auto ec = eval_metrics(init_model(c), cls.eval);
    REQUIRE(ec.accuracy.has_value());
    CHECK(*ec.accuracy >= 0.0);
    CHECK(*ec.accuracy <= 1.0);
}

TEST_CASE("no-pipeline and synchronous share weight dynamics") {
    const auto data = teacher_data(4, 256, 6);
    for (const double tau : {std::numeric_limits<double>::infinity(), 4.0}) {
        RunConfig c = base_config(Strategy::NoPipeline, {6, 5, 4, 1});
        c.device = DeviceConfig::analog(tau);
        c.b_mini = 16;
        c.b_micro = 4;
        c.epochs = 2;
        c.noise_sigma = 0.05;
        c.seed = 8;
        Trace tn;
        Trace ts;
        const auto rn = run_no_pipeline(c, data, tn.hooks());
        c.schedule = Strategy::Synchronous;
        const auto rs = run_synchronous(c, data, ts.hooks());
        CHECK(tn.updates == ts.updates);
        CHECK(rn.final_weights == rs.final_weights);
        REQUIRE(rn.records.size() == rs.records.size());
        for (std::size_t i = 0; i < rn.records.size(); ++i) {
            const auto& a = rn.records[i];
            const auto& b = rs.records[i];
            CHECK(a.update_k == b.update_k);
            CHECK(a.eval_loss == b.eval_loss);
            CHECK(a.samples_done == b.samples_done);
            CHECK(a.clock_cycle == a.update_k * 2 * 3 * 4);
            CHECK(b.clock_cycle == b.update_k * 2 * (3 + 4 - 1));
        }
        CHECK(rn.density() == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
        CHECK(rs.density() == 4.0 / 6.0);
    }
}

TEST_CASE("digital synchronous run equals textbook mini-batch SGD") {
    const auto data = teacher_data(5, 160, 5);
    RunConfig c = base_config(Strategy::Synchronous, {5, 4, 1});
    c.b_mini = 8;
    c.b_micro = 2;
    c.steps = 60;
    c.seed = 21;
    c.alpha = 0.2;
    const NetworkModel init = init_model(c);
    c.initial_weights = init.weights();
    const auto r = run_synchronous(c, data);
    const auto ref = textbook_sgd(init.weights(), data.train, c.plan(), c.steps, c.alpha);
    for (std::size_t m = 0; m < ref.size(); ++m) {
        for (std::size_t i = 0; i < ref[m].size(); ++i) {
            CHECK(std::fabs(r.final_weights[m].values()[i] - ref[m].values()[i]) <= 1e-12);
        }
    }
}

TEST_CASE("async engine matches the reference replay bit for bit") {
    const auto reg = teacher_data(6, 96, 5, 2);
    const auto cls = mixture_data(7, 96, 5, 3);
    for (std::size_t stages = 1; stages <= 4; ++stages) {
        for (const double tau : {std::numeric_limits<double>::infinity(), 10.0, 3.0}) {
            for (const bool classify : {false, true}) {
                const auto& data = classify ? cls : reg;
                std::vector<std::size_t> dims{5};
                for (std::size_t m = 1; m < stages; ++m) {
                    dims.push_back(4);
                }
                dims.push_back(classify ? 3 : 2);
                RunConfig c = base_config(Strategy::Asynchronous, dims);
                c.device = DeviceConfig::analog(tau);
                c.loss = classify ? LossKind::SoftmaxCrossEntropy : LossKind::Mse;
                c.b_mini = 4;
                c.b_micro = classify ? 2 : 1;
                c.steps = 70;
                c.noise_sigma = classify ? 0.1 : 0.0;
                c.seed = 100 + stages;
                c.lr_decay_epochs = {1};
                c.lr_decay_factor = 0.5;
                Trace te;
                Trace tr;
                const auto a = run_async_eventdriven(c, data, te.hooks());
                const auto b = run_async_reference(c, data, tr.hooks());
                CAPTURE(stages);
                CAPTURE(tau);
                CAPTURE(classify);
                CHECK(te.updates == tr.updates);
                CHECK(te.forwards == tr.forwards);
                CHECK(a.final_weights == b.final_weights);
                CHECK(a.records == b.records);
                CHECK(a.staleness_checks == c.steps * stages);
                CHECK(a.device_stats.updates_applied == b.device_stats.updates_applied);
                for (const auto& [key, v] : te.forwards) {
                    CHECK(v == forward_version(key.first, key.second, static_cast<std::uint32_t>(stages)));
                }
            }
        }
    }
}

TEST_CASE("single-stage async is sequential analog SGD") {
    const auto data = teacher_data(8, 64, 4);
    RunConfig c = base_config(Strategy::Asynchronous, {4, 1});
    c.device = DeviceConfig::analog(2.0);
    c.last_activation = ActivationKind::tanh();
    c.steps = 40;
    c.seed = 3;
    const auto r = run_async_eventdriven(c, data);

    NetworkModel m = init_model(c);
    detail::MicroBatchStream stream(data.train, c.plan());
    for (std::uint64_t k = 0; k < c.steps; ++k) {
        const auto batch = gather(data.train, stream.next().indices);
        const auto g = full_gradient(m, batch);
        analog_update_in_place(m.stages[0].weight, g.grads[0], c.alpha, c.device);
    }
    CHECK(r.final_weights[0] == m.stages[0].weight);
}

TEST_CASE("alpha = 0 freezes the network") {
    const auto data = teacher_data(9, 64, 4);
    RunConfig c = base_config(Strategy::Asynchronous, {4, 3, 3, 1});
    c.alpha = 0.0;
    c.steps = 30;
    const auto r = run_async_eventdriven(c, data);
    CHECK(r.final_weights == init_model(c).weights());
    for (const auto& rec : r.records) {
        CHECK(rec.eval_loss == r.records.front().eval_loss);
    }
}

TEST_CASE("record points and clock cycles") {
    const auto data = teacher_data(10, 128, 4);
    RunConfig c = base_config(Strategy::Asynchronous, {4, 3, 3, 1});
    c.steps = 95;
    c.eval_every = 20;
    const auto r = run(c, data);
    std::vector<std::uint64_t> ks;
    for (const auto& rec : r.records) {
        ks.push_back(rec.update_k);
        if (rec.update_k > 0) {
            CHECK(rec.clock_cycle == 2 * (rec.update_k - 1) + 2 * 3);
        }
        CHECK(rec.samples_done == rec.update_k);
    }
    CHECK(ks == std::vector<std::uint64_t>{0, 20, 40, 60, 80, 95});
    CHECK(r.records.back().clock_cycle == r.ledger.total_cycles);
    CHECK(r.samples_total() == 95);
    CHECK(r.updates == 95);
}

TEST_CASE("densities of real runs") {
    const auto data = teacher_data(11, 400, 4);
    RunConfig c = base_config(Strategy::NoPipeline, {4, 3, 3, 3, 1});
    c.b_mini = 5;
    c.b_micro = 1;
    c.epochs = 1;
    CHECK(run(c, data).density() == 0.25);
    c.schedule = Strategy::Synchronous;
    CHECK(run(c, data).density() == 0.625);
    c.schedule = Strategy::Asynchronous;
    c.epochs = 3;
    const auto a = run(c, data);
    CHECK(a.ledger.total_cycles >= 2000);
    CHECK(a.density() >= 0.99);
}

TEST_CASE("saturation abort stops the run") {
    const auto data = teacher_data(12, 64, 4);
    RunConfig c = base_config(Strategy::Asynchronous, {4, 1});
    c.device = DeviceConfig::analog(0.5, 0.5, SaturationPolicy::Abort);
    c.init_scale = 3.0;
    c.steps = 20;
    CHECK_THROWS_AS(run(c, data), SaturationAbort);
    c.device.policy = SaturationPolicy::Warn;
    const auto r = run(c, data);
    CHECK(r.device_stats.saturation_events > 0);
    CHECK_FALSE(r.amplification_s().has_value());
}

TEST_CASE("runs are deterministic") {
    const auto data = mixture_data(13, 128, 6, 2);
    RunConfig c = base_config(Strategy::Asynchronous, {6, 5, 2});
    c.loss = LossKind::SoftmaxCrossEntropy;
    c.device = DeviceConfig::analog(5.0);
    c.noise_sigma = 0.2;
    c.epochs = 2;
    const auto a = run(c, data);
    const auto b = run(c, data);
    CHECK(a.records == b.records);
    CHECK(a.final_weights == b.final_weights);
    c.seed = 1;
    CHECK_FALSE(run(c, data).final_weights == a.final_weights);
}

TEST_CASE("target crossings") {
    RunMetrics m;
    MetricRecord r0;
    r0.eval_loss = 1.0;
    r0.accuracy = 0.5;
    MetricRecord r1 = r0;
    r1.clock_cycle = 40;
    r1.eval_loss = 0.4;
    r1.accuracy = 0.9;
    m.records = {r0, r1};
    CHECK(m.cycles_to_target_loss(0.5) == 40u);
    CHECK(m.cycles_to_target_loss(1.0) == 0u);
    CHECK_FALSE(m.cycles_to_target_loss(0.1).has_value());
    CHECK(m.cycles_to_target_accuracy(0.8) == 40u);
    CHECK_FALSE(m.cycles_to_target_accuracy(0.95).has_value());
}

}  // TEST_SUITE
