#pragma once

#include <stdexcept>
#include <string>

namespace retrolearn {

/// Shapes of two operands do not conform.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A caller-supplied argument violates a documented precondition (h <= 0, tau <= 0, ...).
class PreconditionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// An API was used out of protocol (non-scalar loss, missing grads, incomplete epoch).
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Input data could not be read or parsed.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Configuration file or override is malformed.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss and was aborted.
class NonFiniteLossError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace retrolearn
