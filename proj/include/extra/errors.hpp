#pragma once

#include <stdexcept>
#include <string>

namespace extra {

// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Mismatched vector/matrix dimensions or empty inputs.
struct ShapeError : Error {
    using Error::Error;
};

// Input outside the declared domain (unknown alphabet point, bad pmf, ...).
struct DomainError : Error {
    using Error::Error;
};

// A computation left the representable range; carries the offending exponent
// when one is known.
struct NumericError : Error {
    double exponent;
    explicit NumericError(const std::string& msg, double exponent = 0.0)
        : Error(msg), exponent(exponent) {}
};

// Target mass where the source has none: q(x,u) > 0 with p(x,u) = 0.
struct SupportViolation : Error {
    using Error::Error;
};

// Malformed file contents; the message names file, line and column.
struct SchemaError : Error {
    using Error::Error;
};

// Optimization produced a non-finite or unusable objective.
struct DivergenceError : Error {
    using Error::Error;
};

}  // namespace extra
