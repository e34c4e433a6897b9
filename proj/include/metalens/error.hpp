#pragma once

#include <stdexcept>
#include <string>

namespace metalens {

enum class ErrorKind {
    format,
    size,
    calibration,
    shape,
    parameter,
    transform,
    numeric,
    degenerate_input,
    io,
    config,
};

inline const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::format: return "format error";
        case ErrorKind::size: return "size error";
        case ErrorKind::calibration: return "calibration error";
        case ErrorKind::shape: return "shape error";
        case ErrorKind::parameter: return "parameter error";
        case ErrorKind::transform: return "transform error";
        case ErrorKind::numeric: return "numeric error";
        case ErrorKind::degenerate_input: return "degenerate input";
        case ErrorKind::io: return "i/o error";
        case ErrorKind::config: return "config error";
    }
    return "error";
}

/// Base of every exception thrown by the library. The kind decides the CLI exit code.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind), message_(what) {}

    ErrorKind kind() const noexcept { return kind_; }
    /// what() without the kind prefix.
    const std::string& message() const noexcept { return message_; }

private:
    ErrorKind kind_;
    std::string message_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const std::string& what) {
    if (!cond) fail(kind, what);
}

}  // namespace metalens
