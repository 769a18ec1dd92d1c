#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace knights {

// Input violates a mathematical precondition (zero-norm row, non-finite entry).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// A tunable parameter is out of range (temperature, strides, weights...).
class ParameterError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Operand shapes do not agree.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// File could not be opened, read or written.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed file contents. Carries the byte offset where decoding failed.
class FormatError : public std::runtime_error {
public:
    FormatError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"), detail_(what), offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }
    // Message without the offset suffix.
    const std::string& detail() const noexcept { return detail_; }

private:
    std::string detail_;
    std::size_t offset_;
};

}  // namespace knights
