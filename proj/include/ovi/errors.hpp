#pragma once

#include <stdexcept>
#include <string>

namespace ovi {

/// Base of every error raised by the library. `exit_code()` is the process
/// status the CLI reports for it (1 I/O, 2 validation, 3 numeric).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual int exit_code() const noexcept { return 2; }
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class DomainError : public Error {
public:
    using Error::Error;
};

class InputError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class SchemaError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    using Error::Error;
};

class NumericError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 3; }
};

class IoError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 1; }
};

class CheckpointError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 1; }
};

} // namespace ovi
