// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace frappe {

/// Base class for every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated (bad shape, range, option).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// A numerical routine could not produce a result.
class ComputationError : public Error {
public:
    using Error::Error;
};

/// File could not be opened, read or written.
class IoError : public Error {
public:
    using Error::Error;
};

/// Malformed input document. `line()` is 1-based, 0 when not applicable.
class ParseError : public IoError {
public:
    ParseError(const std::string& what, std::size_t line)
        : IoError(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
          line_(line) {}

    [[nodiscard]] std::size_t line() const noexcept { return line_; }

    /// Same error with the offending file name prefixed to the message.
    [[nodiscard]] ParseError in_file(const std::string& path) const {
        return ParseError(path + ": " + what(), line_, Prefixed{});
    }

private:
    struct Prefixed {};
    ParseError(const std::string& what, std::size_t line, Prefixed) : IoError(what), line_(line) {}

    std::size_t line_;
};

}  // namespace frappe
