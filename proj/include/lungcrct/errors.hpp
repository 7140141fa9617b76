#pragma once

#include <stdexcept>
#include <string>

namespace lungcrct {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes do not conform for the named operation.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A precondition on an argument value was violated.
class ArgumentError : public Error {
public:
    using Error::Error;
};

/// Input data could not be read or is unusable (missing class, bad file).
class DataError : public Error {
public:
    using Error::Error;
};

/// The log-determinant constraint was evaluated outside its M-matrix domain.
class InfeasibleError : public Error {
public:
    using Error::Error;
};

/// Training could not continue (non-finite values, repeated infeasibility).
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Malformed or version-mismatched serialized model.
class FormatError : public Error {
public:
    using Error::Error;
};

}  // namespace lungcrct
