#pragma once

#include <stdexcept>
#include <string>

namespace idedit {

// Shape or length mismatch between arguments.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Argument values outside their documented domain.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class CheckpointFormatError : public CheckpointError {
public:
    using CheckpointError::CheckpointError;
};

class CheckpointTruncatedError : public CheckpointError {
public:
    using CheckpointError::CheckpointError;
};

class CheckpointVersionError : public CheckpointError {
public:
    using CheckpointError::CheckpointError;
};

// Non-finite loss during an optimization loop.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(const std::string& what, int step)
        : std::runtime_error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
    int step() const noexcept { return step_; }

private:
    int step_;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace idedit
