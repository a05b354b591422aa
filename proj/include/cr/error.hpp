#ifndef CR_ERROR_HPP
#define CR_ERROR_HPP

#include <stdexcept>
#include <string>

namespace cr {

// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dimension mismatch between operands.
struct ShapeError : Error {
    using Error::Error;
};

// Mathematically degenerate input (zero vector where a direction is required).
struct DegenerateInputError : Error {
    using Error::Error;
};

// Malformed file content; message carries path and line number.
struct ParseError : Error {
    using Error::Error;
};

// Structurally well-formed input that violates a semantic contract
// (dangling ids, values off the simplex, labels outside {0,1}).
struct ValidationError : Error {
    using Error::Error;
};

// Bad or unknown configuration keys/values.
struct ConfigError : Error {
    using Error::Error;
};

// Filesystem-level failure.
struct IoError : Error {
    using Error::Error;
};

}  // namespace cr

#endif
