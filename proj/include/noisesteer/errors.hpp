#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace noisesteer {

/// Input dimensions do not match what a network, decoder or buffer expects.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Value outside the domain of an operation (e.g. flow time outside [0, 1]).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Invalid configuration or empty required input.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or unsupported file contents.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A non-finite value appeared. `where` is the layer index for network
/// evaluation or the step index for integration/inversion loops.
class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& what, std::size_t where)
      : std::runtime_error(what + " (at index " + std::to_string(where) + ")"), where_(where) {}

  std::size_t where() const noexcept { return where_; }

 private:
  std::size_t where_;
};

}  // namespace noisesteer
