#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace prefmargin {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or invalid corpus data. Carries the 1-based source line when
/// the failure came from a file, 0 otherwise.
class CorpusError : public Error {
public:
    explicit CorpusError(const std::string& message, std::size_t line = 0)
        : Error(line == 0 ? message : "line " + std::to_string(line) + ": " + message),
          line_(line) {}

    [[nodiscard]] std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// A caller-side precondition does not hold (missing field, bad dimension, ...).
class PreconditionError : public Error {
public:
    using Error::Error;
};

/// Training or gradient evaluation produced a non-finite value.
class DivergenceError : public Error {
public:
    using Error::Error;
};

/// Remote judge failure that must be surfaced to the caller (auth, quota,
/// unreachable endpoint).
class JudgeError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace prefmargin
