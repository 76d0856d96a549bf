#pragma once

#include <stdexcept>
#include <string>

namespace autobasis {

// Base of every error raised by the library. The CLI maps subclasses onto
// exit codes, so keep the hierarchy shallow.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Caller broke a documented precondition (e.g. a non-symmetric SymMatrix).
class ContractViolation : public Error {
public:
    using Error::Error;
};

class InvalidInput : public Error {
public:
    using Error::Error;
};

class InvalidKnots : public InvalidInput {
public:
    using InvalidInput::InvalidInput;
};

class UnsupportedDegree : public InvalidInput {
public:
    using InvalidInput::InvalidInput;
};

class UndefinedAcf : public InvalidInput {
public:
    using InvalidInput::InvalidInput;
};

// Numerical failures: exit code 3 in the CLI.
class NumericalError : public Error {
public:
    using Error::Error;
};

class SingularMatrix : public NumericalError {
public:
    explicit SingularMatrix(const std::string& matrix_name)
        : NumericalError("matrix '" + matrix_name + "' is singular after jitter"),
          name_(matrix_name) {}

    const std::string& matrix_name() const noexcept { return name_; }

private:
    std::string name_;
};

class NotPsd : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace autobasis
