#pragma once

#include <stdexcept>
#include <string>

namespace dscore {

// Exit status mapping used by the command-line tool.
enum class ExitCode : int { ok = 0, usage = 1, data = 2, numeric = 3 };

class Error : public std::runtime_error {
public:
    Error(ExitCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
    ExitCode code() const noexcept { return code_; }

private:
    ExitCode code_;
};

/// Bad arguments or configuration supplied by the caller.
class UsageError : public Error {
public:
    explicit UsageError(const std::string& what) : Error(ExitCode::usage, what) {}
};

/// Shape mismatches between tensors, layers, models or datasets.
class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& what) : Error(ExitCode::data, what) {}
};

/// Malformed or inconsistent files.
class FormatError : public Error {
public:
    explicit FormatError(const std::string& what) : Error(ExitCode::data, what) {}
};

class BadMagicError : public FormatError {
public:
    explicit BadMagicError(const std::string& what) : FormatError("bad magic: " + what) {}
};

class TruncatedError : public FormatError {
public:
    explicit TruncatedError(const std::string& what) : FormatError("truncated: " + what) {}
};

class HeaderMismatchError : public FormatError {
public:
    explicit HeaderMismatchError(const std::string& what) : FormatError("header mismatch: " + what) {}
};

/// Non-finite values, impossible normalizations and similar numeric failures.
class NumericError : public Error {
public:
    explicit NumericError(const std::string& what) : Error(ExitCode::numeric, what) {}
};

}  // namespace dscore
