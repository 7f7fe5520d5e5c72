#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace grpolab {

/// Caller supplied something outside the accepted domain (bad token, bad range).
class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// An operation was invoked while its precondition did not hold.
class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t position)
        : std::runtime_error(what), position_(position) {}
    std::size_t position() const noexcept { return position_; }

private:
    std::size_t position_;
};

class GenerationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised by parameter updates when the gradient holds NaN or Inf entries.
class NonFiniteGradient : public std::runtime_error {
public:
    NonFiniteGradient(std::vector<std::size_t> indices);
    const std::vector<std::size_t>& indices() const noexcept { return indices_; }

private:
    std::vector<std::size_t> indices_;
};

}  // namespace grpolab
