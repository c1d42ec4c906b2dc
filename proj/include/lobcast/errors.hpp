#pragma once

#include <stdexcept>
#include <string>

namespace lobcast {

// Invalid user-supplied configuration or input data. CLI maps these to exit 2.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed, inconsistent, or insufficient market data.
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor/parameter shape mismatch.
struct DimensionError : std::runtime_error {
    explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite loss or gradients during optimization.
struct DivergenceError : std::runtime_error {
    explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace lobcast
