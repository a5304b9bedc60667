#pragma once

#include <stdexcept>
#include <string>

namespace sit {

// Violated precondition of an operation (caller bug or malformed request).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class DimensionError : public ContractError {
 public:
  using ContractError::ContractError;
};

class ConfigError : public ContractError {
 public:
  using ContractError::ContractError;
};

class VocabularyError : public ContractError {
 public:
  using ContractError::ContractError;
};

class ParseError : public ContractError {
 public:
  ParseError(const std::string& what, std::size_t position)
      : ContractError(what + " at position " + std::to_string(position)),
        position_(position) {}

  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

// A symbolic trace with a step constraint that no valuation satisfies.
class InvalidTraceError : public ContractError {
 public:
  using ContractError::ContractError;
};

// Enumeration or search bound exceeded.
class ResourceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sit
