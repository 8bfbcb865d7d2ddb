// Copyright 2026 The anapipe Authors
// SPDX-License-Identifier: Apache-2.0

#include "anapipe/netmodel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <string>

#include "anapipe/errors.hpp"

namespace anapipe {

namespace {

double softplus(double z) {
    // log(1 + e^z) without overflow.
    return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

double sigmoid(double z) {
    if (z >= 0.0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

void require_finite(const Vector& v, const char* what) {
    if (!all_finite(v.values())) {
        throw RunAborted(std::string("non-finite values in ") + what);
    }
}

}  // namespace

double ActivationKind::value(double z) const {
    switch (kind) {
        case Kind::Identity:
            return z;
        case Kind::Tanh:
            return std::tanh(z);
        case Kind::LeakySmooth:
            return slope * z + (1.0 - slope) * (softplus(z) - std::numbers::ln2);
    }
    return 0.0;
}

double ActivationKind::derivative(double z) const {
    switch (kind) {
        case Kind::Identity:
            return 1.0;
        case Kind::Tanh: {
            const double t = std::tanh(z);
            return 1.0 - t * t;
        }
        case Kind::LeakySmooth:
            return slope + (1.0 - slope) * sigmoid(z);
    }
    return 0.0;
}

std::string ActivationKind::name() const {
    switch (kind) {
        case Kind::Identity:
            return "identity";
        case Kind::Tanh:
            return "tanh";
        case Kind::LeakySmooth: {
            char buf[32];
            const auto res = std::to_chars(buf, buf + sizeof buf, slope);
            return "leaky_smooth:" + std::string(buf, res.ptr);
        }
    }
    return "?";
}

ActivationKind ActivationKind::parse(const std::string& text) {
    if (text == "identity") {
        return identity();
    }
    if (text == "tanh") {
        return tanh();
    }
    if (text == "leaky_smooth") {
        return leaky_smooth(0.1);
    }
    const std::string prefix = "leaky_smooth:";
    if (text.rfind(prefix, 0) == 0) {
        std::size_t used = 0;
        double s = 0.0;
        try {
            s = std::stod(text.substr(prefix.size()), &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != text.size() - prefix.size() || !(s > 0.0 && s < 1.0)) {
            throw ConfigError("invalid leaky_smooth slope in '" + text + "'");
        }
        return leaky_smooth(s);
    }
    throw ConfigError("unknown activation '" + text + "'");
}

std::string loss_name(LossKind kind) {
    return kind == LossKind::Mse ? "mse" : "softmax_ce";
}

LossKind parse_loss(const std::string& text) {
    if (text == "mse") {
        return LossKind::Mse;
    }
    if (text == "softmax_ce") {
        return LossKind::SoftmaxCrossEntropy;
    }
    throw ConfigError("unknown loss '" + text + "'");
}

void NetworkModel::validate() const {
    if (stages.empty()) {
        throw ConfigError("network needs at least one stage");
    }
    for (std::size_t m = 0; m < stages.size(); ++m) {
        const auto& w = stages[m].weight;
        if (w.rows() == 0 || w.cols() == 0) {
            throw ConfigError("stage " + std::to_string(m + 1) + " has an empty weight");
        }
        if (m + 1 < stages.size() && stages[m + 1].weight.cols() != w.rows()) {
            throw ConfigError("stage " + std::to_string(m + 1) + " output dim " +
                              std::to_string(w.rows()) + " does not match stage " +
                              std::to_string(m + 2) + " input dim " +
                              std::to_string(stages[m + 1].weight.cols()));
        }
        stages[m].device.validate();
    }
}

std::vector<Matrix> NetworkModel::weights() const {
    std::vector<Matrix> out;
    out.reserve(stages.size());
    for (const auto& s : stages) {
        out.push_back(s.weight);
    }
    return out;
}

StageForward forward_stage(const Matrix& weight, const ActivationKind& act, const Vector& x_in) {
    StageForward f;
    f.z = matvec(weight, x_in);
    f.x_out = Vector(f.z.size());
    f.gprime = Vector(f.z.size());
    for (std::size_t i = 0; i < f.z.size(); ++i) {
        f.x_out[i] = act.value(f.z[i]);
        f.gprime[i] = act.derivative(f.z[i]);
    }
    require_finite(f.x_out, "forward output");
    return f;
}

StageForward forward_stage(const StageState& stage, const Vector& x_in) {
    return forward_stage(stage.weight, stage.activation, x_in);
}

LossHead loss_head(const Vector& x_last, const Vector& z_last, const Vector& y, LossKind loss,
                   const ActivationKind& activation_last) {
    if (x_last.size() != y.size() || z_last.size() != x_last.size()) {
        throw ConfigError("loss_head: output dim " + std::to_string(x_last.size()) +
                          " does not match label dim " + std::to_string(y.size()));
    }
    const std::size_t n = y.size();
    LossHead head;
    Vector grad(n);
    if (loss == LossKind::Mse) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double r = x_last[i] - y[i];
            acc += r * r;
            grad[i] = r;
        }
        head.loss = 0.5 * acc;
    } else {
        double ysum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (!(y[i] >= 0.0)) {
                throw ConfigError("softmax_ce: label entries must be non-negative");
            }
            ysum += y[i];
        }
        if (std::fabs(ysum - 1.0) > 1e-9) {
            throw ConfigError("softmax_ce: label must be a probability vector");
        }
        const double mx = *std::max_element(x_last.begin(), x_last.end());
        double denom = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            denom += std::exp(x_last[i] - mx);
        }
        const double log_denom = std::log(denom);
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double log_p = x_last[i] - mx - log_denom;
            if (y[i] != 0.0) {
                acc -= y[i] * log_p;
            }
            grad[i] = std::exp(log_p) - y[i];
        }
        head.loss = acc;
    }
    head.delta = Vector(n);
    for (std::size_t i = 0; i < n; ++i) {
        head.delta[i] = grad[i] * activation_last.derivative(z_last[i]);
    }
    if (!std::isfinite(head.loss)) {
        throw RunAborted("non-finite loss");
    }
    return head;
}

Vector backward_stage(const Vector& delta_next, const Matrix& w_next, const Vector& gprime) {
    if (w_next.cols() != gprime.size()) {
        throw ConfigError("backward_stage: weight has " + std::to_string(w_next.cols()) +
                          " columns but gprime has " + std::to_string(gprime.size()) + " entries");
    }
    return hadamard(vecmat(delta_next, w_next), gprime);
}

Matrix microbatch_gradient(std::span<const Vector> deltas, std::span<const Vector> inputs) {
    if (deltas.empty() || deltas.size() != inputs.size()) {
        throw ConfigError("microbatch_gradient: need matching non-empty delta and input lists");
    }
    Matrix g = stage_gradient(deltas[0], inputs[0]);
    for (std::size_t s = 1; s < deltas.size(); ++s) {
        accumulate(g, stage_gradient(deltas[s], inputs[s]));
    }
    if (deltas.size() > 1) {
        scale_in_place(g, 1.0 / static_cast<double>(deltas.size()));
    }
    return g;
}

GradientResult full_gradient(const NetworkModel& model, std::span<const Matrix> weights,
                             std::span<const Sample> batch) {
    if (batch.empty()) {
        throw ConfigError("full_gradient: empty batch");
    }
    const std::size_t stages = model.stages.size();
    GradientResult result;
    result.grads.reserve(stages);
    for (const Matrix& w : weights) {
        result.grads.emplace_back(w.rows(), w.cols());
    }
    std::vector<Vector> inputs(stages);
    std::vector<StageForward> fw(stages);
    double loss_sum = 0.0;
    for (const Sample& s : batch) {
        Vector x = s.x;
        for (std::size_t m = 0; m < stages; ++m) {
            fw[m] = forward_stage(weights[m], model.stages[m].activation, x);
            inputs[m] = std::move(x);
            x = fw[m].x_out;
        }
        const LossHead head = loss_head(fw.back().x_out, fw.back().z, s.y, model.loss,
                                        model.stages.back().activation);
        loss_sum += head.loss;
        Vector delta = head.delta;
        for (std::size_t m = stages; m-- > 0;) {
            accumulate(result.grads[m], stage_gradient(delta, inputs[m]));
            if (m > 0) {
                delta = backward_stage(delta, weights[m], fw[m - 1].gprime);
            }
        }
    }
    const double n = static_cast<double>(batch.size());
    result.loss = loss_sum / n;
    for (Matrix& g : result.grads) {
        for (double& v : g.values()) {
            v /= n;
        }
    }
    return result;
}

GradientResult full_gradient(const NetworkModel& model, std::span<const Sample> batch) {
    const auto w = model.weights();
    return full_gradient(model, w, batch);
}

Vector predict(const NetworkModel& model, const Vector& x) {
    Vector cur = x;
    for (const auto& stage : model.stages) {
        cur = forward_stage(stage, cur).x_out;
    }
    return cur;
}

double batch_loss(const NetworkModel& model, std::span<const Sample> batch) {
    if (batch.empty()) {
        throw ConfigError("batch_loss: empty batch");
    }
    double sum = 0.0;
    for (const Sample& s : batch) {
        Vector cur = s.x;
        StageForward last;
        for (const auto& stage : model.stages) {
            last = forward_stage(stage, cur);
            cur = last.x_out;
        }
        sum += loss_head(last.x_out, last.z, s.y, model.loss, model.stages.back().activation).loss;
    }
    return sum / static_cast<double>(batch.size());
}

std::vector<Matrix> finite_diff_gradient(const NetworkModel& model, std::span<const Sample> batch,
                                         double h) {
    if (!(h > 0.0)) {
        throw ConfigError("finite_diff_gradient: h must be positive");
    }
    NetworkModel probe = model;
    std::vector<Matrix> out;
    out.reserve(model.stages.size());
    for (std::size_t m = 0; m < model.stages.size(); ++m) {
        Matrix g(model.stages[m].weight.rows(), model.stages[m].weight.cols());
        auto wv = probe.stages[m].weight.values();
        auto gv = g.values();
        for (std::size_t i = 0; i < wv.size(); ++i) {
            const double orig = wv[i];
            wv[i] = orig + h;
            const double plus = batch_loss(probe, batch);
            wv[i] = orig - h;
            const double minus = batch_loss(probe, batch);
            wv[i] = orig;
            gv[i] = (plus - minus) / (2.0 * h);
        }
        out.push_back(std::move(g));
    }
    return out;
}

}  // namespace anapipe
