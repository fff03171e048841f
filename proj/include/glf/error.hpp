#pragma once

#include <stdexcept>
#include <string>

namespace glf {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input: bad design, shape mismatch, unknown ids, invalid files.
/// The CLI maps it to exit code 2.
class DataError : public Error {
public:
    using Error::Error;
};

/// Degenerate or failed numerics: zero variances, singular systems,
/// non-finite values. The CLI maps it to exit code 3.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration values or keys (exit code 1).
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace glf
