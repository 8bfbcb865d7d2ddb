// Copyright 2026 The anapipe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace anapipe {

/// Invalid shapes, parameters or configuration. Maps to CLI exit code 1.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Malformed input text (CSV rows, config lines). Carries the 1-based line.
class ParseError : public ConfigError {
public:
    ParseError(const std::string& what, std::size_t line)
        : ConfigError(what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// A run stopped before completion (non-finite values, saturation abort).
/// Maps to CLI exit code 2.
class RunAborted : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class SaturationAbort : public RunAborted {
public:
    using RunAborted::RunAborted;
};

/// An internal invariant of the simulator failed. Always a bug.
class InvariantViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

}  // namespace anapipe
