#pragma once

#include <stdexcept>
#include <string>

namespace lambo {

enum class Errc {
    ShapeMismatch,
    NonFinite,
    NotScalar,
    ConfigError,
    UnknownPrompt,
    InvalidDecision,
    OracleTooLarge,
    Infeasible,
    BadMagic,
    VersionUnsupported,
    TruncatedFile,
    OffsetOverlap,
    IoError,
};

/// Domain error carrying a machine-checkable code alongside the message.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

[[noreturn]] inline void raise(Errc code, const std::string& message) {
    throw Error(code, message);
}

}  // namespace lambo
