#pragma once

#include <stdexcept>
#include <string>

namespace promptface {

/// Failure classes surfaced to the command line as distinct exit codes.
enum class ErrorKind { Usage, Data, Numeric };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

    /// Short machine-parseable tag, e.g. "E_DATA".
    const char* tag() const noexcept {
        switch (kind_) {
            case ErrorKind::Usage: return "E_USAGE";
            case ErrorKind::Data: return "E_DATA";
            case ErrorKind::Numeric: return "E_NUMERIC";
        }
        return "E_UNKNOWN";
    }

    int exit_code() const noexcept {
        switch (kind_) {
            case ErrorKind::Usage: return 2;
            case ErrorKind::Data: return 3;
            case ErrorKind::Numeric: return 4;
        }
        return 1;
    }

private:
    ErrorKind kind_;
};

class UsageError : public Error {
public:
    explicit UsageError(const std::string& m) : Error(ErrorKind::Usage, m) {}
};

class DataError : public Error {
public:
    explicit DataError(const std::string& m) : Error(ErrorKind::Data, m) {}
};

class NumericError : public Error {
public:
    explicit NumericError(const std::string& m) : Error(ErrorKind::Numeric, m) {}
};

}  // namespace promptface
