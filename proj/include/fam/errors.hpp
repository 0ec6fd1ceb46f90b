#pragma once

#include <stdexcept>
#include <string>

namespace fam {

/// Invalid configuration values (counts, radii, rates, unknown names).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed call: shape mismatch, out-of-range action, empty batch.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operation not allowed in the current state (e.g. stepping a finished episode).
class StateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite loss, gradient, or network output.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File read/write failures and malformed checkpoints.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Failure inside a training run, tagged with where it happened.
class RunError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fam
