#pragma once

#include <stdexcept>
#include <string>

namespace flexnoise {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An argument violated a documented precondition.
class InputError : public Error {
public:
    using Error::Error;
};

/// A numerical procedure failed (factorization, integration, non-finite value).
class NumericalError : public Error {
public:
    using Error::Error;
};

/// A configuration file, protocol or experiment setup is inconsistent.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Every optimizer restart failed.
class OptimizationError : public Error {
public:
    using Error::Error;
};

} // namespace flexnoise
