// Copyright 2026 The anapipe Authors
// SPDX-License-Identifier: Apache-2.0
//
// Weight-update rules of an asymmetric linear analog device.
//
// A single update event with increment G and step alpha maps
//
//     W' = W - alpha * G - alpha / tau * (|G| (.) W)
//
// elementwise. The second term is the asymmetric bias: an entry moving toward
// -tau * sign(G) receives smaller increments and stops at that value. With
// 1/tau = 0 the rule is plain digital SGD.

#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "anapipe/densecore.hpp"

namespace anapipe {

enum class DeviceMode { Digital, Analog };
enum class SaturationPolicy { Warn, Abort };

struct DeviceConfig {
    DeviceMode mode = DeviceMode::Digital;
    // Stored as 1/tau so the digital device is exactly 0 rather than a huge tau.
    double inv_tau = 0.0;
    // Saturation degree (||W||_inf / tau) at which a saturation event fires.
    double saturation_limit = 0.95;
    SaturationPolicy policy = SaturationPolicy::Warn;

    static DeviceConfig digital() { return {}; }
    static DeviceConfig analog(double tau, double saturation_limit = 0.95,
                               SaturationPolicy policy = SaturationPolicy::Warn);

    /// Throws ConfigError unless inv_tau == 0 iff Digital and 0 < limit < 1.
    void validate() const;

    /// tau, or +inf for the digital device.
    double tau() const;

    bool operator==(const DeviceConfig&) const = default;
};

struct UpdateStats {
    double max_inf_norm_seen = 0.0;
    double max_degree_seen = 0.0;
    std::uint64_t saturation_events = 0;
    std::uint64_t updates_applied = 0;

    void merge(const UpdateStats& other);
};

/// One analog update event with step alpha.
Matrix analog_update(const Matrix& w, const Matrix& g, double alpha, const DeviceConfig& dev);

/// In-place form of analog_update; identical arithmetic.
void analog_update_in_place(Matrix& w, const Matrix& g, double alpha, const DeviceConfig& dev);

/// Mini-batch update from B gradients that were all taken at w_start.
///
/// Analog: B sequential device events with step alpha/B, the decay term
/// seeing the evolving weight. Digital: w_start - (alpha/B) * sum_b G_b with
/// the sum taken in order.
Matrix minibatch_analog_update(const Matrix& w_start, std::span<const Matrix> grads, double alpha,
                               const DeviceConfig& dev);

struct SaturationCheck {
    double degree = 0.0;
    bool triggered = false;
};

/// Saturation degree ||W||_inf / tau. Updates stats; throws SaturationAbort when
/// triggered under the abort policy. Digital devices always report degree 0.
SaturationCheck check_saturation(const Matrix& w, const DeviceConfig& dev, UpdateStats& stats,
                                 const std::string& where = {});

/// Amplification factor (1+u) d^2 / (1 - (1+u) d^2) of the asymptotic error
/// floor, for saturation degree d. u = 0 gives the synchronous factor S,
/// u > 0 the asynchronous S'. Throws ConfigError if (1+u) d^2 >= 1.
double amplification_factor(double degree, double u);

/// The synchronous factor in its linear-numerator form,
/// (W_max/tau^2) / (1 - W_max/tau^2). Reported next to the squared form for
/// comparison only. Returns NaN when the denominator is not positive.
double amplification_factor_linear(double w_max, double inv_tau);

}  // namespace anapipe
