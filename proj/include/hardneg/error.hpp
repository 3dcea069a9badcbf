#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hardneg {

// Base for every error the library raises.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A record or configuration violates a documented invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

// Malformed input file. `line` is 1-based; 0 when not line-oriented.
class ParseError : public Error {
public:
    ParseError(const std::string& source, std::size_t line, const std::string& what)
        : Error(source + (line ? ":" + std::to_string(line) : std::string()) + ": " + what),
          line_(line) {}

    [[nodiscard]] std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace hardneg
