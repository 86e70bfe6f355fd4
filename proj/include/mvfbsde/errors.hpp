#pragma once

#include <stdexcept>
#include <string>

namespace mvfbsde {

/// Bad dimensions, bad parameter ranges, malformed configuration.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Misuse of an API contract (e.g. backward pass from a non-scalar node).
class UsageError : public std::logic_error {
public:
    explicit UsageError(const std::string& what) : std::logic_error(what) {}
};

/// Non-finite state or divergence during path simulation.
class SimulationError : public std::runtime_error {
public:
    explicit SimulationError(const std::string& what) : std::runtime_error(what) {}
};

/// Non-finite loss/gradient or other failure inside a training loop.
class TrainingError : public std::runtime_error {
public:
    explicit TrainingError(const std::string& what) : std::runtime_error(what) {}
};

/// Unreadable, truncated or inconsistent artifact on disk.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace mvfbsde
