// Copyright 2026 The anapipe Authors
// SPDX-License-Identifier: Apache-2.0

#include "anapipe/densecore.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "anapipe/errors.hpp"

namespace anapipe {

namespace {

[[noreturn]] void shape_error(const char* op, std::size_t a, std::size_t b) {
    throw ConfigError(std::string(op) + ": dimension mismatch (" + std::to_string(a) + " vs " +
                      std::to_string(b) + ")");
}

double apply(EwiseOp op, double a, double b, double scale) {
    switch (op) {
        case EwiseOp::Mul:
            return a * b;
        case EwiseOp::AbsOfFirstTimesSecond:
            return std::fabs(a) * b;
        case EwiseOp::AddScaled:
            return a + scale * b;
    }
    return 0.0;
}

}  // namespace

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows)
    : rows_(rows.size()), cols_(rows.size() == 0 ? 0 : rows.begin()->size()) {
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) {
            throw ConfigError("Matrix: ragged initializer");
        }
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        m(i, i) = 1.0;
    }
    return m;
}

Vector matvec(const Matrix& w, const Vector& x) {
    if (w.cols() != x.size()) {
        shape_error("matvec", w.cols(), x.size());
    }
    Vector out(w.rows());
    for (std::size_t i = 0; i < w.rows(); ++i) {
        const auto row = w.row(i);
        double acc = 0.0;
        for (std::size_t j = 0; j < row.size(); ++j) {
            acc += row[j] * x[j];
        }
        out[i] = acc;
    }
    return out;
}

Vector vecmat(const Vector& d, const Matrix& w) {
    if (d.size() != w.rows()) {
        shape_error("vecmat", d.size(), w.rows());
    }
    // Column sums accumulate row by row; for each output j the terms are
    // still added in increasing i.
    Vector out(w.cols());
    for (std::size_t i = 0; i < w.rows(); ++i) {
        const auto row = w.row(i);
        const double di = d[i];
        for (std::size_t j = 0; j < row.size(); ++j) {
            out[j] += di * row[j];
        }
    }
    return out;
}

Matrix outer(const Vector& d, const Vector& x) {
    Matrix out(d.size(), x.size());
    auto v = out.values();
    for (std::size_t i = 0; i < d.size(); ++i) {
        for (std::size_t j = 0; j < x.size(); ++j) {
            v[i * x.size() + j] = d[i] * x[j];
        }
    }
    return out;
}

Vector ewise(const Vector& a, const Vector& b, EwiseOp op, double scale) {
    if (a.size() != b.size()) {
        shape_error("ewise", a.size(), b.size());
    }
    Vector out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        out[i] = apply(op, a[i], b[i], scale);
    }
    return out;
}

Matrix ewise(const Matrix& a, const Matrix& b, EwiseOp op, double scale) {
    if (!a.same_shape(b)) {
        shape_error("ewise", a.size(), b.size());
    }
    Matrix out(a.rows(), a.cols());
    auto o = out.values();
    const auto av = a.values();
    const auto bv = b.values();
    for (std::size_t i = 0; i < o.size(); ++i) {
        o[i] = apply(op, av[i], bv[i], scale);
    }
    return out;
}

void accumulate(Matrix& acc, const Matrix& b) {
    if (!acc.same_shape(b)) {
        shape_error("accumulate", acc.size(), b.size());
    }
    auto a = acc.values();
    const auto bv = b.values();
    for (std::size_t i = 0; i < a.size(); ++i) {
        a[i] += bv[i];
    }
}

void scale_in_place(Matrix& m, double s) {
    for (double& v : m.values()) {
        v *= s;
    }
}

Norms norms(std::span<const double> values) {
    Norms n;
    double sq = 0.0;
    for (double v : values) {
        n.inf = std::max(n.inf, std::fabs(v));
        sq += v * v;
    }
    n.fro = std::sqrt(sq);
    return n;
}

bool all_finite(std::span<const double> values) noexcept {
    for (double v : values) {
        if (!std::isfinite(v)) {
            return false;
        }
    }
    return true;
}

}  // namespace anapipe
