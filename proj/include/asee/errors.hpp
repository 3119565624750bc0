#pragma once

#include <stdexcept>
#include <string>

namespace asee {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Region-normal averaging found no points inside the region.
class NoSupport : public Error {
public:
    using Error::Error;
};

/// Landing stage received an empty depth vector.
class NoDepth : public Error {
public:
    using Error::Error;
};

/// Hand-eye motion set or fiducial set does not constrain the solution.
class Degenerate : public Error {
public:
    using Error::Error;
};

class LimitViolation : public Error {
public:
    using Error::Error;
};

class DivideByZero : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

} // namespace asee
