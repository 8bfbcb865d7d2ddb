// Copyright 2026 The anapipe Authors
// SPDX-License-Identifier: Apache-2.0
//
// Desk-scale data sources and the mini/micro-batch iterator.

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "anapipe/netmodel.hpp"

namespace anapipe {

enum class Task { Regression, Classification };

struct Dataset {
    std::vector<Sample> samples;
    std::size_t feature_dim = 0;
    std::size_t label_dim = 0;
    Task task = Task::Regression;

    std::size_t size() const noexcept { return samples.size(); }
    /// Throws ConfigError on dimension mismatches, non-finite values, and
    /// non-one-hot labels for classification.
    void validate() const;
};

/// Projects x onto the unit sphere. A zero vector is left unchanged.
void normalize_feature(Vector& x);

struct TeacherSpec {
    std::size_t stages = 2;
    std::size_t hidden_dim = 0;  // 0: use the input dimension
    std::size_t output_dim = 1;
    // Teacher weights are N(0, (weight_scale^2) / fan_in).
    double weight_scale = 1.0;
    ActivationKind activation = ActivationKind::tanh();
};

/// Inputs uniform on the unit sphere in R^d, labels from a frozen random
/// teacher network. Deterministic per seed.
Dataset gen_teacher_regression(std::uint64_t seed, std::size_t n, std::size_t d,
                               const TeacherSpec& teacher = {});

struct MixtureSpec {
    // Norm of every class mean before re-normalisation.
    double separation = 1.0;
    // Per-coordinate standard deviation of each cloud.
    double spread = 0.25;
};

/// Gaussian clouds around the vertices of a centred regular simplex (class
/// means sum to zero), features re-normalised to the unit sphere, one-hot
/// labels. Requires 2 <= classes <= d.
Dataset gen_gaussian_mixture(std::uint64_t seed, std::size_t n, std::size_t d, std::size_t classes,
                             const MixtureSpec& spec = {});

/// CSV with header x1,...,xd,y1,...,yc and one sample per row.
Dataset load_csv(std::istream& in, bool normalize = true);
Dataset load_csv(const std::filesystem::path& path, bool normalize = true);
void write_csv(std::ostream& out, const Dataset& ds);
void write_csv(const std::filesystem::path& path, const Dataset& ds);

struct BatchPlan {
    std::size_t b_mini = 1;
    std::size_t b_micro = 1;
    std::uint64_t seed = 0;

    std::size_t micro_batches() const { return b_mini / b_micro; }
    /// Throws ConfigError unless b_micro divides b_mini.
    void validate() const;
    std::size_t minibatches_per_epoch(std::size_t n) const { return n / b_mini; }
};

/// Indices of one micro-batch into the dataset.
using MicroBatch = std::vector<std::size_t>;

/// Seeded permutation of 0..n-1 for the given epoch.
std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed, std::uint64_t epoch);

/// floor(n / b_mini) * B micro-batches, taken in order from the epoch's
/// permutation. Leftover samples are dropped.
std::vector<MicroBatch> batch_iterator(const Dataset& ds, const BatchPlan& plan, std::uint64_t epoch);

std::vector<Sample> gather(const Dataset& ds, std::span<const std::size_t> indices);

}  // namespace anapipe
