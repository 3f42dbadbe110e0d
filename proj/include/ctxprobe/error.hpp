// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace ctxprobe {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed input text (annotation lines, plan records, config files).
class ParseError : public Error {
public:
    ParseError(const std::string &what, std::size_t line)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
    explicit ParseError(const std::string &what) : Error(what), line_(0) {}

    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

// Well-formed input that violates a data invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

// Binary trace container problems: bad magic, truncation, size mismatch.
class FormatError : public Error {
public:
    using Error::Error;
};

// Numerical preconditions not met (degenerate inputs, singular systems).
class StatsError : public Error {
public:
    using Error::Error;
};

} // namespace ctxprobe
