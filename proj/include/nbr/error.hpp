#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nbr {

// Base for every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidParameter : public Error {
 public:
  using Error::Error;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Corrupt, truncated or version-incompatible persisted data.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Raised by attribute encoding for degradations that have no attribute channel.
class NoTrueAttribute : public Error {
 public:
  using Error::Error;
};

// A failure inside a degradation chain, tagged with the offending step.
class ChainError : public Error {
 public:
  ChainError(std::size_t step, const std::string& what)
      : Error("chain step " + std::to_string(step) + ": " + what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

// Malformed chain text; column() is the 1-based position of the offending
// character.
class ParseError : public InvalidParameter {
 public:
  ParseError(std::size_t column, const std::string& what)
      : InvalidParameter("column " + std::to_string(column) + ": " + what), column_(column) {}
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t column_;
};

class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

}  // namespace nbr
