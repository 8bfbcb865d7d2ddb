// Copyright 2026 The anapipe Authors
// SPDX-License-Identifier: Apache-2.0
//
// Minimal dense linear algebra over 64-bit reals.
//
// Storage is row-major. Every reduction sums left to right in index order
// and no product is blocked or parallelised, so identical inputs always give
// bit-identical outputs. The simulator's oracle-equivalence tests depend on
// this.

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace anapipe {

class Vector {
public:
    Vector() = default;
    explicit Vector(std::size_t n, double fill = 0.0) : data_(n, fill) {}
    Vector(std::initializer_list<double> values) : data_(values) {}
    explicit Vector(std::vector<double> values) : data_(std::move(values)) {}

    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double operator[](std::size_t i) const { return data_[i]; }
    double& operator[](std::size_t i) { return data_[i]; }

    std::span<const double> values() const noexcept { return data_; }
    std::span<double> values() noexcept { return data_; }

    auto begin() const noexcept { return data_.begin(); }
    auto end() const noexcept { return data_.end(); }
    auto begin() noexcept { return data_.begin(); }
    auto end() noexcept { return data_.end(); }

    bool operator==(const Vector&) const = default;

private:
    std::vector<double> data_;
};

class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    static Matrix identity(std::size_t n);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }

    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }
    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }

    std::span<const double> row(std::size_t i) const {
        return std::span<const double>(data_).subspan(i * cols_, cols_);
    }

    std::span<const double> values() const noexcept { return data_; }
    std::span<double> values() noexcept { return data_; }

    bool same_shape(const Matrix& other) const noexcept {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// W x
Vector matvec(const Matrix& w, const Vector& x);
// d W, with d treated as a row vector
Vector vecmat(const Vector& d, const Matrix& w);
Matrix outer(const Vector& d, const Vector& x);

enum class EwiseOp {
    Mul,                    // a * b
    AbsOfFirstTimesSecond,  // |a| * b
    AddScaled,              // a + scale * b
};

Vector ewise(const Vector& a, const Vector& b, EwiseOp op, double scale = 1.0);
Matrix ewise(const Matrix& a, const Matrix& b, EwiseOp op, double scale = 1.0);

inline Vector hadamard(const Vector& a, const Vector& b) { return ewise(a, b, EwiseOp::Mul); }
inline Matrix hadamard(const Matrix& a, const Matrix& b) { return ewise(a, b, EwiseOp::Mul); }
inline Matrix add_scaled(const Matrix& a, const Matrix& b, double scale) {
    return ewise(a, b, EwiseOp::AddScaled, scale);
}

/// acc += b, in place. Used for gradient accumulation.
void accumulate(Matrix& acc, const Matrix& b);
void scale_in_place(Matrix& m, double s);

struct Norms {
    double inf = 0.0;
    double fro = 0.0;
};

Norms norms(std::span<const double> values);
inline Norms norms(const Vector& v) { return norms(v.values()); }
inline Norms norms(const Matrix& m) { return norms(m.values()); }

bool all_finite(std::span<const double> values) noexcept;

}  // namespace anapipe
