#pragma once

#include <stdexcept>
#include <string>

namespace itowave {

// Argument outside the mathematical domain of an operation (e.g. t not in [0, T]).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed or missing input data (files, alignment, empty datasets).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FormatError : public DataError {
 public:
  using DataError::DataError;
};

// NaN/Inf or divergence detected during a computation.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// API misuse such as calling backward() on an empty tape.
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace itowave
