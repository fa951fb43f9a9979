#pragma once

#include <stdexcept>
#include <string>

namespace hairshift {

// Base class for all errors thrown by this library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Tensor/image shape disagreement between operands.
class DimensionError : public Error {
public:
    using Error::Error;
};

// Invalid argument value (bad sizes, counts, ranges).
class ArgumentError : public Error {
public:
    using Error::Error;
};

// A region that must be non-empty turned out empty.
class EmptyRegionError : public Error {
public:
    using Error::Error;
};

// An optimization loop produced a non-finite or increasing loss.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& stage, long step, const std::string& what)
        : Error("[" + stage + "] step " + std::to_string(step) + ": " + what),
          stage_(stage),
          step_(step) {}

    const std::string& stage() const { return stage_; }
    long step() const { return step_; }

private:
    std::string stage_;
    long step_;
};

class IoError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace hairshift
