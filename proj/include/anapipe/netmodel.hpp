// Copyright 2026 The anapipe Authors
// SPDX-License-Identifier: Apache-2.0
//
// M-stage dense network without biases. Stage m computes
//
//     z = W x_in,   x_out = g(z)
//
// and errors travel backward as row vectors: delta_m = (delta_{m+1} W_{m+1}) (.) g'(z_m).
// The weight gradient of a stage is the rank-1 matrix delta_m (x) x_m.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "anapipe/analogdev.hpp"
#include "anapipe/densecore.hpp"

namespace anapipe {

struct ActivationKind {
    enum class Kind { Identity, Tanh, LeakySmooth };

    Kind kind = Kind::Tanh;
    // Only used by LeakySmooth: g(z) = s z + (1 - s)(softplus(z) - ln 2).
    // Smooth, g(0) = 0, g'(z) = s + (1 - s) sigmoid(z) in (s, 1).
    double slope = 0.1;

    static ActivationKind identity() { return {Kind::Identity, 0.0}; }
    static ActivationKind tanh() { return {Kind::Tanh, 0.0}; }
    static ActivationKind leaky_smooth(double slope) { return {Kind::LeakySmooth, slope}; }

    double value(double z) const;
    double derivative(double z) const;

    std::string name() const;
    /// Accepts "identity", "tanh", "leaky_smooth" or "leaky_smooth:<slope>".
    static ActivationKind parse(const std::string& text);

    bool operator==(const ActivationKind&) const = default;
};

enum class LossKind {
    Mse,                  // 0.5 * ||x - y||^2
    SoftmaxCrossEntropy,  // -sum y_i log softmax(x)_i, x taken as logits
};

std::string loss_name(LossKind kind);
LossKind parse_loss(const std::string& text);

struct StageState {
    Matrix weight;
    ActivationKind activation;
    // Number of updates applied so far; the k in W_k.
    std::uint64_t version = 0;
    DeviceConfig device;

    std::size_t input_dim() const noexcept { return weight.cols(); }
    std::size_t output_dim() const noexcept { return weight.rows(); }
};

struct NetworkModel {
    std::vector<StageState> stages;
    LossKind loss = LossKind::Mse;

    std::size_t stage_count() const noexcept { return stages.size(); }
    /// Throws ConfigError if there are no stages or adjacent dims disagree.
    void validate() const;

    std::vector<Matrix> weights() const;
};

struct Sample {
    Vector x;
    Vector y;
};

struct StageForward {
    Vector z;
    Vector x_out;
    Vector gprime;
};

StageForward forward_stage(const StageState& stage, const Vector& x_in);
StageForward forward_stage(const Matrix& weight, const ActivationKind& act, const Vector& x_in);

struct LossHead {
    double loss = 0.0;
    Vector delta;
};

/// Loss of the last stage output and the last-stage error
/// delta_M = grad_x loss(x_last, y) (.) g'(z_last).
LossHead loss_head(const Vector& x_last, const Vector& z_last, const Vector& y, LossKind loss,
                   const ActivationKind& activation_last);

/// (delta_next W_next) (.) gprime
Vector backward_stage(const Vector& delta_next, const Matrix& w_next, const Vector& gprime);

inline Matrix stage_gradient(const Vector& delta, const Vector& x) { return outer(delta, x); }

/// Mean of delta_s (x) x_s over a micro-batch, summed in sample order.
Matrix microbatch_gradient(std::span<const Vector> deltas, std::span<const Vector> inputs);

struct GradientResult {
    double loss = 0.0;
    std::vector<Matrix> grads;
};

/// Mean loss and per-stage gradients over the batch with all stages at their
/// current weights.
GradientResult full_gradient(const NetworkModel& model, std::span<const Sample> batch);

/// Same, with weights supplied separately from the model's stored weights.
GradientResult full_gradient(const NetworkModel& model, std::span<const Matrix> weights,
                             std::span<const Sample> batch);

/// Mean loss only.
double batch_loss(const NetworkModel& model, std::span<const Sample> batch);

/// Network output (last stage activations) for one input.
Vector predict(const NetworkModel& model, const Vector& x);

/// Central differences of the mean loss with respect to every weight entry.
std::vector<Matrix> finite_diff_gradient(const NetworkModel& model, std::span<const Sample> batch,
                                         double h);

}  // namespace anapipe
