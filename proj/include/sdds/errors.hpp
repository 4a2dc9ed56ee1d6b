#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace sdds {

// Invalid numeric parameter (non-positive step, beta outside (1/2,1), ...).
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A point outside the box on which a problem's constants are certified.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Request outside the supported range of an algorithm (e.g. dimension).
class UnsupportedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed experiment configuration; carries the offending field.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& what)
      : std::runtime_error(field.empty() ? what : field + ": " + what), field_(std::move(field)) {}

  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

}  // namespace sdds
