#pragma once

#include <stdexcept>
#include <string>

namespace cge {

// Bad arguments, shape mismatches, malformed configuration.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Filesystem / serialization problems.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// Numerical contract broken at runtime (non-finite loss, degenerate input).
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace cge
