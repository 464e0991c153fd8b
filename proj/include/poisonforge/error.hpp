#pragma once

#include <stdexcept>
#include <string>

namespace poisonforge {

// Failure classes map one-to-one onto CLI exit codes.
enum class ErrorKind {
    validation = 1,
    io = 2,
    degenerate = 3,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }
    int exit_code() const noexcept { return static_cast<int>(kind_); }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail_validation(const std::string& what) {
    throw Error(ErrorKind::validation, what);
}

[[noreturn]] inline void fail_io(const std::string& what) {
    throw Error(ErrorKind::io, what);
}

[[noreturn]] inline void fail_degenerate(const std::string& what) {
    throw Error(ErrorKind::degenerate, what);
}

} // namespace poisonforge
