#pragma once

#include <stdexcept>
#include <string>

namespace wsaflow {

// Shape or extent mismatch between operands.
struct DimensionError : std::invalid_argument {
    explicit DimensionError(const std::string& msg) : std::invalid_argument(msg) {}
};

// NaN or Inf encountered where finite values are required.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Index outside the addressed array.
struct IndexError : std::out_of_range {
    explicit IndexError(const std::string& msg) : std::out_of_range(msg) {}
};

// API misuse (e.g. backward on a non-scalar, double backward).
struct ContractError : std::logic_error {
    explicit ContractError(const std::string& msg) : std::logic_error(msg) {}
};

// Invalid run/model configuration.
struct ConfigError : std::invalid_argument {
    explicit ConfigError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Malformed file content; carries the byte offset of the defect.
struct FormatError : std::runtime_error {
    long long offset;
    FormatError(const std::string& msg, long long at)
        : std::runtime_error(msg + " (byte offset " + std::to_string(at) + ")"), offset(at) {}
};

}  // namespace wsaflow
