#pragma once

#include <stdexcept>
#include <string>

namespace swisenet {

// Invalid argument or configuration value passed to an operation.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Tensor dimensions that do not line up.
class ShapeError : public ArgumentError {
 public:
  using ArgumentError::ArgumentError;
};

// NaN/Inf encountered in a loss or gradient.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Missing, unreadable or undecodable input data.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad key, bad value or unknown key in a run configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace swisenet
