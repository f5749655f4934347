#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nnreach {

/// Precondition violated by the caller (shape mismatch, inverted bounds, ...).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A CellId that is not (or no longer) part of the grid.
class NotFound : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// A point outside the grid bounds.
class OutOfBounds : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Splitting would produce a cell narrower than the minimum width floor.
class RefinementFloor : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// NaN or otherwise unusable numeric value.
class InvalidValue : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class TrainingFailure : public std::runtime_error {
 public:
  TrainingFailure(int epoch, const std::string& what)
      : std::runtime_error("epoch " + std::to_string(epoch) + ": " + what), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

/// Stepping a VerticalCAS state that has already reached tau = 0.
class TerminalState : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Inconsistent inputs to the reachability engine, e.g. a missing action set.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace nnreach
