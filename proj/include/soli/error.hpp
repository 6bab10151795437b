#pragma once

#include <stdexcept>
#include <string>

namespace soli {

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad value passed to an operation (dimension <= 0, even kernel size, ...).
class ArgumentError : public Error {
public:
    using Error::Error;
};

// Malformed text input (profile grammar, manifest lines, config files).
class ParseError : public Error {
public:
    using Error::Error;
};

// File system / codec failures.
class IoError : public Error {
public:
    using Error::Error;
};

// API called out of sequence (backward before forward, double backward).
class StateError : public Error {
public:
    using Error::Error;
};

// Inconsistent run configuration (gamma=lambda=0, spec mismatch on load).
class ConfigError : public Error {
public:
    using Error::Error;
};

} // namespace soli
