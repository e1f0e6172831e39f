#pragma once

#include <stdexcept>
#include <string>

namespace cbm {

/// Exit codes shared by every CLI subcommand.
enum class ExitCode : int {
    ok = 0,
    validation = 2,
    io = 3,
    protocol = 4,
};

class Error : public std::runtime_error {
public:
    Error(ExitCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    ExitCode code() const noexcept { return code_; }

private:
    ExitCode code_;
};

/// Bad input: out-of-range parameters, schema violations, unknown labels.
class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& what) : Error(ExitCode::validation, what) {}
};

/// Filesystem and network failures. Carries the failing path when known.
class IoError : public Error {
public:
    IoError(const std::string& what, std::string path = {})
        : Error(ExitCode::io, path.empty() ? what : what + ": " + path), path_(std::move(path)) {}

    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

/// Observer misbehaved on the wire (bad message, wrong stimulus id, timeout, disconnect).
class ProtocolError : public Error {
public:
    explicit ProtocolError(const std::string& what) : Error(ExitCode::protocol, what) {}
};

}  // namespace cbm
