#pragma once

#include <stdexcept>
#include <string>

namespace gridrl {

// Caller passed shapes/arguments that violate an operation's contract.
struct UsageError : std::invalid_argument {
    explicit UsageError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Bad run configuration (unknown environment name, invalid hyperparameter).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite value surfaced where finite arithmetic is required.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Procedural layout generation exhausted its retry budget.
struct GenerationError : std::runtime_error {
    explicit GenerationError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace gridrl
