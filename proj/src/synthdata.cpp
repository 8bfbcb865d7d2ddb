// Copyright 2026 The anapipe Authors
// SPDX-License-Identifier: Apache-2.0

#include "anapipe/synthdata.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "anapipe/errors.hpp"

namespace anapipe {

namespace {

// Stream tags keep generators seeded from the same user seed independent.
constexpr std::uint64_t kTagTeacherWeights = 0x7465616368ULL;
constexpr std::uint64_t kTagInputs = 0x696e707574ULL;
constexpr std::uint64_t kTagMixture = 0x6d6978ULL;
constexpr std::uint64_t kTagShuffle = 0x73687566ULL;

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t tag, std::uint64_t extra = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(tag >> 32),
                      static_cast<std::uint32_t>(extra), static_cast<std::uint32_t>(extra >> 32)};
    return std::mt19937_64(seq);
}

bool is_one_hot(const Vector& y) {
    std::size_t ones = 0;
    for (double v : y) {
        if (v == 1.0) {
            ++ones;
        } else if (v != 0.0) {
            return false;
        }
    }
    return ones == 1;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_commas(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ',')) {
        out.push_back(trim(cell));
    }
    if (!line.empty() && line.back() == ',') {
        out.emplace_back();
    }
    return out;
}

bool parse_double(const std::string& s, double& out) {
    if (s.empty()) {
        return false;
    }
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (*first == '+') {
        ++first;
    }
    const auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last;
}

// Expects names prefix1..prefixN in order; returns N.
std::size_t count_prefixed(const std::vector<std::string>& header, std::size_t start, char prefix) {
    std::size_t n = 0;
    while (start + n < header.size() && header[start + n] == prefix + std::to_string(n + 1)) {
        ++n;
    }
    return n;
}

}  // namespace

void Dataset::validate() const {
    if (samples.empty()) {
        throw ConfigError("dataset is empty");
    }
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        if (s.x.size() != feature_dim || s.y.size() != label_dim) {
            throw ConfigError("sample " + std::to_string(i) + " has wrong dimensions");
        }
        if (!all_finite(s.x.values()) || !all_finite(s.y.values())) {
            throw ConfigError("sample " + std::to_string(i) + " has non-finite values");
        }
        if (task == Task::Classification && !is_one_hot(s.y)) {
            throw ConfigError("sample " + std::to_string(i) + " label is not one-hot");
        }
    }
}

void normalize_feature(Vector& x) {
    const double n = norms(x).fro;
    if (n == 0.0) {
        return;
    }
    for (double& v : x.values()) {
        v /= n;
    }
}

Dataset gen_teacher_regression(std::uint64_t seed, std::size_t n, std::size_t d,
                               const TeacherSpec& teacher) {
    if (n == 0 || d == 0 || teacher.stages == 0 || teacher.output_dim == 0) {
        throw ConfigError("gen_teacher_regression: n, d, stages and output_dim must be positive");
    }
    const std::size_t hidden = teacher.hidden_dim == 0 ? d : teacher.hidden_dim;

    NetworkModel net;
    net.loss = LossKind::Mse;
    auto wrng = make_rng(seed, kTagTeacherWeights);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::size_t in = d;
    for (std::size_t m = 0; m < teacher.stages; ++m) {
        const std::size_t out = (m + 1 == teacher.stages) ? teacher.output_dim : hidden;
        StageState st;
        st.weight = Matrix(out, in);
        const double sd = teacher.weight_scale / std::sqrt(static_cast<double>(in));
        for (double& v : st.weight.values()) {
            v = sd * normal(wrng);
        }
        st.activation = (m + 1 == teacher.stages) ? ActivationKind::identity() : teacher.activation;
        net.stages.push_back(std::move(st));
        in = out;
    }

    Dataset ds;
    ds.feature_dim = d;
    ds.label_dim = teacher.output_dim;
    ds.task = Task::Regression;
    ds.samples.reserve(n);
    auto xrng = make_rng(seed, kTagInputs);
    for (std::size_t i = 0; i < n; ++i) {
        Vector x(d);
        // Isotropic Gaussian projected to the sphere is uniform on the sphere.
        do {
            for (double& v : x.values()) {
                v = normal(xrng);
            }
        } while (norms(x).fro == 0.0);
        normalize_feature(x);
        Vector y = predict(net, x);
        ds.samples.push_back({std::move(x), std::move(y)});
    }
    return ds;
}

Dataset gen_gaussian_mixture(std::uint64_t seed, std::size_t n, std::size_t d, std::size_t classes,
                             const MixtureSpec& spec) {
    if (classes < 2) {
        throw ConfigError("gen_gaussian_mixture: need at least 2 classes");
    }
    if (classes > d) {
        throw ConfigError("gen_gaussian_mixture: classes must not exceed the feature dimension");
    }
    if (n == 0) {
        throw ConfigError("gen_gaussian_mixture: n must be positive");
    }
    const double c = static_cast<double>(classes);
    const double vertex_norm = std::sqrt((c - 1.0) / c);
    std::vector<Vector> means(classes, Vector(d));
    for (std::size_t k = 0; k < classes; ++k) {
        for (std::size_t j = 0; j < classes; ++j) {
            const double v = (j == k ? 1.0 : 0.0) - 1.0 / c;
            means[k][j] = spec.separation * v / vertex_norm;
        }
    }

    Dataset ds;
    ds.feature_dim = d;
    ds.label_dim = classes;
    ds.task = Task::Classification;
    ds.samples.reserve(n);
    auto rng = make_rng(seed, kTagMixture);
    std::normal_distribution<double> noise(0.0, spec.spread);
    std::uniform_int_distribution<std::size_t> pick(0, classes - 1);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t k = pick(rng);
        Vector x = means[k];
        for (double& v : x.values()) {
            v += noise(rng);
        }
        normalize_feature(x);
        Vector y(classes);
        y[k] = 1.0;
        ds.samples.push_back({std::move(x), std::move(y)});
    }
    return ds;
}

Dataset load_csv(std::istream& in, bool normalize) {
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++line_no;
        if (!trim(line).empty()) {
            header = split_commas(trim(line));
            break;
        }
    }
    if (header.empty()) {
        throw ParseError("csv: empty file", line_no);
    }
    const std::size_t d = count_prefixed(header, 0, 'x');
    const std::size_t c = count_prefixed(header, d, 'y');
    if (d == 0 || c == 0 || d + c != header.size()) {
        throw ParseError("csv line " + std::to_string(line_no) +
                             ": header must be x1,...,xd,y1,...,yc",
                         line_no);
    }

    Dataset ds;
    ds.feature_dim = d;
    ds.label_dim = c;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty()) {
            continue;
        }
        const auto cells = split_commas(t);
        if (cells.size() != d + c) {
            throw ParseError("csv line " + std::to_string(line_no) + ": expected " +
                                 std::to_string(d + c) + " fields, got " +
                                 std::to_string(cells.size()),
                             line_no);
        }
        Sample s{Vector(d), Vector(c)};
        for (std::size_t j = 0; j < cells.size(); ++j) {
            double v = 0.0;
            if (!parse_double(cells[j], v) || !std::isfinite(v)) {
                throw ParseError("csv line " + std::to_string(line_no) + ", column " +
                                     std::to_string(j + 1) + " (" + header[j] +
                                     "): not a finite number: '" + cells[j] + "'",
                                 line_no);
            }
            if (j < d) {
                s.x[j] = v;
            } else {
                s.y[j - d] = v;
            }
        }
        if (normalize) {
            normalize_feature(s.x);
        }
        ds.samples.push_back(std::move(s));
    }
    if (ds.samples.empty()) {
        throw ParseError("csv: no data rows", line_no);
    }
    ds.task = (c >= 2 && std::all_of(ds.samples.begin(), ds.samples.end(),
                                     [](const Sample& s) { return is_one_hot(s.y); }))
                  ? Task::Classification
                  : Task::Regression;
    return ds;
}

Dataset load_csv(const std::filesystem::path& path, bool normalize) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open " + path.string());
    }
    return load_csv(in, normalize);
}

void write_csv(std::ostream& out, const Dataset& ds) {
    for (std::size_t j = 0; j < ds.feature_dim; ++j) {
        out << (j ? "," : "") << 'x' << j + 1;
    }
    for (std::size_t j = 0; j < ds.label_dim; ++j) {
        out << ",y" << j + 1;
    }
    out << '\n';
    const auto old = out.precision(std::numeric_limits<double>::max_digits10);
    for (const auto& s : ds.samples) {
        for (std::size_t j = 0; j < s.x.size(); ++j) {
            out << (j ? "," : "") << s.x[j];
        }
        for (double v : s.y) {
            out << ',' << v;
        }
        out << '\n';
    }
    out.precision(old);
}

void write_csv(const std::filesystem::path& path, const Dataset& ds) {
    std::ofstream out(path);
    if (!out) {
        throw ConfigError("cannot write " + path.string());
    }
    write_csv(out, ds);
}

void BatchPlan::validate() const {
    if (b_mini == 0 || b_micro == 0) {
        throw ConfigError("b_mini and b_micro must be positive");
    }
    if (b_mini % b_micro != 0) {
        throw ConfigError("B_mini not divisible by B_micro");
    }
}

std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed, std::uint64_t epoch) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    auto rng = make_rng(seed, kTagShuffle, epoch);
    std::shuffle(perm.begin(), perm.end(), rng);
    return perm;
}

std::vector<MicroBatch> batch_iterator(const Dataset& ds, const BatchPlan& plan, std::uint64_t epoch) {
    plan.validate();
    const std::size_t used = plan.minibatches_per_epoch(ds.size()) * plan.b_mini;
    const auto perm = epoch_permutation(ds.size(), plan.seed, epoch);
    std::vector<MicroBatch> out;
    out.reserve(used / plan.b_micro);
    for (std::size_t start = 0; start < used; start += plan.b_micro) {
        out.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(start),
                         perm.begin() + static_cast<std::ptrdiff_t>(start + plan.b_micro));
    }
    return out;
}

std::vector<Sample> gather(const Dataset& ds, std::span<const std::size_t> indices) {
    std::vector<Sample> out;
    out.reserve(indices.size());
    for (std::size_t i : indices) {
        out.push_back(ds.samples.at(i));
    }
    return out;
}

}  // namespace anapipe
