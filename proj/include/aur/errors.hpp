#pragma once

#include <stdexcept>
#include <string>

namespace aur {

/// Raised when an argument violates a documented precondition.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Factorization or optimization failure that could not be recovered.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FitError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class DuplicatePoint : public InvalidInput {
 public:
  DuplicatePoint(const std::string& what, double distance)
      : InvalidInput(what), distance_(distance) {}
  double distance() const { return distance_; }

 private:
  double distance_;
};

class ProbeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Environment reached a non-finite state.
class FaultError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or version-mismatched file / config.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Wraps an error raised inside one pipeline stage with the stage's name.
class StageError : public std::runtime_error {
 public:
  StageError(const std::string& stage, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage_(stage) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

}  // namespace aur
