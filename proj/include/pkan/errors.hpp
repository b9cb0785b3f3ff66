#pragma once

#include <stdexcept>
#include <string>

namespace pkan {

// Root of every error raised by the library. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid configuration or precondition on arguments.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Evaluation point outside an edge domain beyond the clamp tolerance.
class DomainError : public Error {
public:
    using Error::Error;
};

// NaN/Inf encountered, or training diverged.
class NumericError : public Error {
public:
    using Error::Error;
};

// Rank-deficient least-squares system.
class SingularityError : public Error {
public:
    using Error::Error;
};

// Out-of-order call sequence (backward without matching forward).
class ProtocolError : public Error {
public:
    using Error::Error;
};

// Signal with zero power, constant targets and similar degenerate inputs.
class DegenerateInputError : public Error {
public:
    using Error::Error;
};

// Malformed checkpoint or dataset file.
class FormatError : public Error {
public:
    using Error::Error;
};

}  // namespace pkan
