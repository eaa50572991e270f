#pragma once

#include <stdexcept>
#include <string>

namespace ppt {

// Base class for every error thrown by this library.
struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Tensor shape or dimension mismatch. Messages name the offending shapes.
struct ShapeError : Error {
    using Error::Error;
};

// Violated operation precondition (non-divisible extents, non-scalar loss, ...).
struct ContractError : Error {
    using Error::Error;
};

// Invalid configuration value, unknown key, or unsupported combination.
struct ConfigError : Error {
    using Error::Error;
};

// Filesystem access and file format failures.
struct IoError : Error {
    using Error::Error;
};

// NaN or Inf encountered where finite values are required.
struct NumericError : Error {
    using Error::Error;
};

}  // namespace ppt
