#pragma once

#include <stdexcept>
#include <string>

namespace treexfer {

// Base for all library errors. The CLI maps each family to an exit code.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad user input: unreadable files, malformed dumps, schema violations. Exit 2.
class InputError : public Error {
public:
    using Error::Error;
};

// Parse failure in a model dump, carrying the offending line and key.
class ParseError : public InputError {
public:
    ParseError(std::size_t line, std::string key, const std::string& what)
        : InputError("line " + std::to_string(line) + ", key '" + key + "': " + what),
          line_(line), key_(std::move(key)) {}

    std::size_t line() const noexcept { return line_; }
    const std::string& key() const noexcept { return key_; }

private:
    std::size_t line_;
    std::string key_;
};

// Model is in the wrong state for the request (e.g. oblique where axis-parallel is required). Exit 3.
class StateError : public Error {
public:
    using Error::Error;
};

// Non-finite values during training or evaluation. Exit 4.
class NumericalError : public Error {
public:
    using Error::Error;
};

}  // namespace treexfer
