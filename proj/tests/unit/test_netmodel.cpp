// Copyright 2026 The anapipe Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"

#include "anapipe/errors.hpp"
#include "anapipe/netmodel.hpp"

using namespace anapipe;

namespace {

NetworkModel random_model(std::mt19937_64& rng, const std::vector<std::size_t>& dims, LossKind loss,
                          ActivationKind act = ActivationKind::tanh()) {
    std::normal_distribution<double> nd;
    NetworkModel m;
    m.loss = loss;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        StageState st;
        st.weight = Matrix(dims[i + 1], dims[i]);
        for (double& v : st.weight.values()) {
            v = nd(rng) / std::sqrt(static_cast<double>(dims[i]));
        }
        st.activation = act;
        m.stages.push_back(std::move(st));
    }
    return m;
}

std::vector<Sample> random_batch(std::mt19937_64& rng, std::size_t n, std::size_t d_in, std::size_t d_out,
                                 bool one_hot) {
    std::normal_distribution<double> nd;
    std::uniform_int_distribution<std::size_t> cls(0, d_out - 1);
    std::vector<Sample> out;
    for (std::size_t s = 0; s < n; ++s) {
        Sample smp{Vector(d_in), Vector(d_out)};
        for (double& v : smp.x.values()) {
            v = nd(rng);
        }
        if (one_hot) {
            smp.y[cls(rng)] = 1.0;
        } else {
            for (double& v : smp.y.values()) {
                v = nd(rng);
            }
        }
        out.push_back(std::move(smp));
    }
    return out;
}

double max_scaled_error(const std::vector<Matrix>& fd, const std::vector<Matrix>& an) {
    double worst = 0.0;
    for (std::size_t m = 0; m < fd.size(); ++m) {
        for (std::size_t i = 0; i < fd[m].size(); ++i) {
            const double a = an[m].values()[i];
            worst = std::max(worst, std::fabs(fd[m].values()[i] - a) / (1.0 + std::fabs(a)));
        }
    }
    return worst;
}

}  // namespace

TEST_SUITE("netmodel") {

TEST_CASE("activation values") {
    const auto t = ActivationKind::tanh();
    CHECK(t.value(0.0) == 0.0);
    CHECK(t.derivative(0.0) == 1.0);
    const auto id = ActivationKind::identity();
    CHECK(id.value(-2.5) == -2.5);
    CHECK(id.derivative(7.0) == 1.0);
    const auto ls = ActivationKind::leaky_smooth(0.2);
    CHECK(ls.value(0.0) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(ls.derivative(0.0) == doctest::Approx(0.6));
    CHECK(ls.derivative(-50.0) == doctest::Approx(0.2));
    CHECK(ls.derivative(50.0) == doctest::Approx(1.0));
    // Derivative agrees with a central difference.
    for (double z : {-3.0, -0.5, 0.1, 2.0}) {
        const double fd = (ls.value(z + 1e-6) - ls.value(z - 1e-6)) / 2e-6;
        CHECK(ls.derivative(z) == doctest::Approx(fd).epsilon(1e-8));
    }
}

TEST_CASE("activation and loss names round-trip") {
    for (const auto& a : {ActivationKind::identity(), ActivationKind::tanh(), ActivationKind::leaky_smooth(0.125),
                          ActivationKind::leaky_smooth(0.1)}) {
        CHECK(ActivationKind::parse(a.name()) == a);
    }
    CHECK(parse_loss(loss_name(LossKind::Mse)) == LossKind::Mse);
    CHECK(parse_loss(loss_name(LossKind::SoftmaxCrossEntropy)) == LossKind::SoftmaxCrossEntropy);
    CHECK_THROWS_AS(ActivationKind::parse("relu"), ConfigError);
    CHECK_THROWS_AS(ActivationKind::parse("leaky_smooth:x"), ConfigError);
    CHECK_THROWS_AS(parse_loss("hinge"), ConfigError);
}

TEST_CASE("forward_stage examples") {
    StageState st;
    st.weight = Matrix::identity(2);
    st.activation = ActivationKind::identity();
    auto f = forward_stage(st, Vector{0.6, 0.8});
    CHECK(f.z == Vector{0.6, 0.8});
    CHECK(f.x_out == Vector{0.6, 0.8});
    CHECK(f.gprime == Vector{1, 1});

    st.weight = Matrix(3, 2);
    st.activation = ActivationKind::tanh();
    f = forward_stage(st, Vector{0.6, 0.8});
    CHECK(f.z == Vector(3));
    CHECK(f.x_out == Vector(3));
    CHECK(f.gprime == Vector(3, 1.0));

    st.weight = Matrix{{1, 1}};
    f = forward_stage(st, Vector{0.6, 0.8});
    CHECK(f.z[0] == 1.4);
    CHECK(f.x_out[0] == doctest::Approx(0.8853516482022625).epsilon(1e-15));
    CHECK(f.gprime[0] == doctest::Approx(0.21615245902553715).epsilon(1e-15));
    CHECK_THROWS_AS(forward_stage(st, Vector{1, 2, 3}), ConfigError);
}

TEST_CASE("forward_stage aborts on non-finite output") {
    StageState st;
    st.weight = Matrix{{1e308, 1e308}};
    st.activation = ActivationKind::identity();
    CHECK_THROWS_AS(forward_stage(st, Vector{10, 10}), RunAborted);
}

TEST_CASE("loss_head examples") {
    const auto id = ActivationKind::identity();
    auto h = loss_head(Vector{0.3, -1}, Vector{0.3, -1}, Vector{0.3, -1}, LossKind::Mse, id);
    CHECK(h.loss == 0.0);
    CHECK(h.delta == Vector{0, 0});

    h = loss_head(Vector{1}, Vector{1}, Vector{0}, LossKind::Mse, id);
    CHECK(h.loss == 0.5);
    CHECK(h.delta == Vector{1});

    h = loss_head(Vector{0, 0}, Vector{0, 0}, Vector{1, 0}, LossKind::SoftmaxCrossEntropy, id);
    CHECK(h.loss == doctest::Approx(std::numbers::ln2).epsilon(1e-15));
    CHECK(h.delta == Vector{-0.5, 0.5});
}

TEST_CASE("softmax cross-entropy rejects invalid labels") {
    const auto id = ActivationKind::identity();
    CHECK_THROWS_AS(loss_head(Vector{0, 0}, Vector{0, 0}, Vector{1, 1}, LossKind::SoftmaxCrossEntropy, id),
                    ConfigError);
    CHECK_THROWS_AS(loss_head(Vector{0, 0}, Vector{0, 0}, Vector{1.5, -0.5}, LossKind::SoftmaxCrossEntropy, id),
                    ConfigError);
    CHECK_NOTHROW(loss_head(Vector{0, 0}, Vector{0, 0}, Vector{0.25, 0.75}, LossKind::SoftmaxCrossEntropy, id));
}

TEST_CASE("softmax cross-entropy is stable for large logits") {
    const auto id = ActivationKind::identity();
    const auto h = loss_head(Vector{1000, 0}, Vector{1000, 0}, Vector{1, 0}, LossKind::SoftmaxCrossEntropy, id);
    CHECK(h.loss == doctest::Approx(0.0));
    CHECK(std::isfinite(h.delta[1]));
}

TEST_CASE("backward_stage examples") {
    CHECK(backward_stage(Vector{0.3, -2}, Matrix::identity(2), Vector{1, 1}) == Vector{0.3, -2});
    CHECK(backward_stage(Vector{1}, Matrix{{2, 3}}, Vector{1, 1}) == Vector{2, 3});
    CHECK(backward_stage(Vector{1}, Matrix{{2, 3}}, Vector{0, 0}) == Vector{0, 0});
    CHECK_THROWS_AS(backward_stage(Vector{1, 2}, Matrix{{2, 3}}, Vector{1, 1}), ConfigError);
}

TEST_CASE("stage_gradient is the outer product") {
    CHECK(stage_gradient(Vector{2}, Vector{3}) == Matrix{{6}});
    CHECK(stage_gradient(Vector{1, -1}, Vector{0.5, 0.5}) == Matrix{{0.5, 0.5}, {-0.5, -0.5}});
}

TEST_CASE("full_gradient examples") {
    NetworkModel m;
    StageState st;
    st.weight = Matrix{{1}};
    st.activation = ActivationKind::identity();
    m.stages.push_back(st);
    const std::vector<Sample> one{{Vector{1}, Vector{0}}};
    const auto g = full_gradient(m, one);
    CHECK(g.loss == 0.5);
    CHECK(g.grads[0] == Matrix{{1}});

    std::mt19937_64 rng(3);
    const NetworkModel r = random_model(rng, {3, 4, 2}, LossKind::Mse);
    const auto b = random_batch(rng, 1, 3, 2, false);
    const std::vector<Sample> twice{b[0], b[0]};
    const auto g1 = full_gradient(r, b);
    const auto g2 = full_gradient(r, twice);
    CHECK(g1.loss == g2.loss);
    for (std::size_t s = 0; s < g1.grads.size(); ++s) {
        CHECK(g1.grads[s] == g2.grads[s]);
        CHECK(g1.grads[s].same_shape(r.stages[s].weight));
    }

    // Labels equal to predictions give zero error everywhere.
    std::vector<Sample> fit = random_batch(rng, 4, 3, 2, false);
    for (auto& s : fit) {
        s.y = predict(r, s.x);
    }
    for (const auto& gm : full_gradient(r, fit).grads) {
        CHECK(norms(gm).inf == 0.0);
    }
    CHECK_THROWS_AS(full_gradient(r, std::vector<Sample>{}), ConfigError);
}

TEST_CASE("finite differences on a scalar quadratic") {
    NetworkModel m;
    StageState st;
    st.weight = Matrix{{0.7}};
    st.activation = ActivationKind::identity();
    m.stages.push_back(st);
    const std::vector<Sample> b{{Vector{1.3}, Vector{-0.4}}};
    const auto fd = finite_diff_gradient(m, b, 1e-5);
    const auto an = full_gradient(m, b).grads;
    CHECK(std::fabs(fd[0](0, 0) - an[0](0, 0)) <= 1e-7);
    CHECK_THROWS_AS(finite_diff_gradient(m, b, 0.0), ConfigError);

    const std::vector<Sample> zero{{Vector{1.0}, Vector{0.7}}};
    CHECK(std::fabs(finite_diff_gradient(m, zero, 1e-5)[0](0, 0)) <= 1e-9);
}

TEST_CASE("gradient check on random models") {
    std::mt19937_64 rng(2026);
    std::uniform_int_distribution<std::size_t> stages(1, 3);
    std::uniform_int_distribution<std::size_t> width(2, 8);
    for (int trial = 0; trial < 24; ++trial) {
        const LossKind loss = trial % 2 == 0 ? LossKind::Mse : LossKind::SoftmaxCrossEntropy;
        std::vector<std::size_t> dims{width(rng)};
        const std::size_t m = stages(rng);
        for (std::size_t i = 0; i < m; ++i) {
            dims.push_back(width(rng));
        }
        NetworkModel model = random_model(rng, dims, loss);
        model.stages.back().activation = trial % 4 < 2 ? ActivationKind::identity() : ActivationKind::tanh();
        const auto batch = random_batch(rng, 3, dims.front(), dims.back(), loss == LossKind::SoftmaxCrossEntropy);
        const auto an = full_gradient(model, batch).grads;
        const auto fd = finite_diff_gradient(model, batch, 1e-5);
        CAPTURE(trial);
        CHECK(max_scaled_error(fd, an) <= 1e-5);
    }
}

TEST_CASE("centred forward of the zero input") {
    std::mt19937_64 rng(5);
    const NetworkModel m = random_model(rng, {4, 5, 3}, LossKind::Mse);
    CHECK(predict(m, Vector(4)) == Vector(3));
}

TEST_CASE("model validation") {
    NetworkModel m;
    CHECK_THROWS_AS(m.validate(), ConfigError);
    std::mt19937_64 rng(1);
    m = random_model(rng, {3, 4, 2}, LossKind::Mse);
    CHECK_NOTHROW(m.validate());
    m.stages[1].weight = Matrix(2, 5);
    CHECK_THROWS_AS(m.validate(), ConfigError);
}

}  // TEST_SUITE
