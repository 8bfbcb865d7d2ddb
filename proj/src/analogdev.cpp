// Copyright 2026 The anapipe Authors
// SPDX-License-Identifier: Apache-2.0

#include "anapipe/analogdev.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "anapipe/errors.hpp"

namespace anapipe {

DeviceConfig DeviceConfig::analog(double tau, double saturation_limit, SaturationPolicy policy) {
    if (!(tau > 0.0)) {
        throw ConfigError("tau must be positive");
    }
    DeviceConfig d;
    if (std::isinf(tau)) {
        d.mode = DeviceMode::Digital;
        d.inv_tau = 0.0;
    } else {
        d.mode = DeviceMode::Analog;
        d.inv_tau = 1.0 / tau;
    }
    d.saturation_limit = saturation_limit;
    d.policy = policy;
    d.validate();
    return d;
}

void DeviceConfig::validate() const {
    if (!(inv_tau >= 0.0) || !std::isfinite(inv_tau)) {
        throw ConfigError("inv_tau must be finite and non-negative");
    }
    if ((inv_tau == 0.0) != (mode == DeviceMode::Digital)) {
        throw ConfigError("inv_tau must be 0 exactly for the digital device and only then");
    }
    if (!(saturation_limit > 0.0 && saturation_limit < 1.0)) {
        throw ConfigError("saturation_limit must lie in (0, 1)");
    }
}

double DeviceConfig::tau() const {
    return inv_tau == 0.0 ? std::numeric_limits<double>::infinity() : 1.0 / inv_tau;
}

void UpdateStats::merge(const UpdateStats& other) {
    max_inf_norm_seen = std::max(max_inf_norm_seen, other.max_inf_norm_seen);
    max_degree_seen = std::max(max_degree_seen, other.max_degree_seen);
    saturation_events += other.saturation_events;
    updates_applied += other.updates_applied;
}

void analog_update_in_place(Matrix& w, const Matrix& g, double alpha, const DeviceConfig& dev) {
    if (!w.same_shape(g)) {
        throw ConfigError("analog_update: weight and increment shapes differ");
    }
    if (!(alpha >= 0.0)) {
        throw ConfigError("analog_update: step must be non-negative");
    }
    const double decay = alpha * dev.inv_tau;
    auto wv = w.values();
    const auto gv = g.values();
    for (std::size_t i = 0; i < wv.size(); ++i) {
        wv[i] = wv[i] - alpha * gv[i] - decay * (std::fabs(gv[i]) * wv[i]);
    }
    if (!all_finite(wv)) {
        throw RunAborted("analog_update: non-finite weight after update");
    }
}

Matrix analog_update(const Matrix& w, const Matrix& g, double alpha, const DeviceConfig& dev) {
    Matrix out = w;
    analog_update_in_place(out, g, alpha, dev);
    return out;
}

Matrix minibatch_analog_update(const Matrix& w_start, std::span<const Matrix> grads, double alpha,
                               const DeviceConfig& dev) {
    if (grads.empty()) {
        throw ConfigError("minibatch_analog_update: need at least one gradient");
    }
    const double step = alpha / static_cast<double>(grads.size());
    if (dev.mode == DeviceMode::Digital) {
        Matrix sum = grads[0];
        for (std::size_t b = 1; b < grads.size(); ++b) {
            accumulate(sum, grads[b]);
        }
        Matrix out = w_start;
        analog_update_in_place(out, sum, step, dev);
        return out;
    }
    Matrix w = w_start;
    for (const Matrix& g : grads) {
        analog_update_in_place(w, g, step, dev);
    }
    return w;
}

SaturationCheck check_saturation(const Matrix& w, const DeviceConfig& dev, UpdateStats& stats,
                                 const std::string& where) {
    SaturationCheck result;
    const double inf = norms(w).inf;
    stats.max_inf_norm_seen = std::max(stats.max_inf_norm_seen, inf);
    ++stats.updates_applied;
    if (dev.mode == DeviceMode::Digital) {
        return result;
    }
    result.degree = inf * dev.inv_tau;
    result.triggered = result.degree >= dev.saturation_limit;
    stats.max_degree_seen = std::max(stats.max_degree_seen, result.degree);
    if (result.triggered) {
        ++stats.saturation_events;
        if (dev.policy == SaturationPolicy::Abort) {
            std::ostringstream os;
            os << "saturation";
            if (!where.empty()) {
                os << " at " << where;
            }
            os << ": degree " << result.degree << " >= limit " << dev.saturation_limit
               << " (||W||_inf = " << inf << ", tau = " << dev.tau() << ")";
            throw SaturationAbort(os.str());
        }
    }
    return result;
}

double amplification_factor(double degree, double u) {
    if (!(u >= 0.0) || !(degree >= 0.0)) {
        throw ConfigError("amplification_factor: degree and u must be non-negative");
    }
    const double q = (1.0 + u) * degree * degree;
    if (!(q < 1.0)) {
        throw ConfigError("amplification_factor: device too saturated for the bound to apply");
    }
    return q / (1.0 - q);
}

double amplification_factor_linear(double w_max, double inv_tau) {
    const double q = w_max * inv_tau * inv_tau;
    if (!(q < 1.0)) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    return q / (1.0 - q);
}

}  // namespace anapipe
