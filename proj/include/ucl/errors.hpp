#pragma once

#include <stdexcept>
#include <string>

namespace ucl {

struct DimensionError : std::runtime_error {
    explicit DimensionError(const std::string& m) : std::runtime_error(m) {}
};
struct InputError : std::runtime_error {
    explicit InputError(const std::string& m) : std::runtime_error(m) {}
};
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& m) : std::runtime_error(m) {}
};
struct IntegrityError : std::runtime_error {
    explicit IntegrityError(const std::string& m) : std::runtime_error(m) {}
};
struct VersionError : std::runtime_error {
    explicit VersionError(const std::string& m) : std::runtime_error(m) {}
};
// Raised when a loss term turns non-finite; names the offending component.
struct NonFiniteLossError : std::runtime_error {
    explicit NonFiniteLossError(const std::string& m) : std::runtime_error(m) {}
};

}  // namespace ucl
