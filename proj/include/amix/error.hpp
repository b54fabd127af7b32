#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace amix {

/// Base of every error raised by the library. Callers that only need a
/// message can catch std::runtime_error.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string shape_to_string(const std::vector<std::size_t>& shape);

class ShapeError : public Error {
 public:
  ShapeError(const std::string& op, std::vector<std::size_t> lhs, std::vector<std::size_t> rhs)
      : Error(op + ": shape mismatch " + shape_to_string(lhs) + " vs " + shape_to_string(rhs)),
        lhs_(std::move(lhs)),
        rhs_(std::move(rhs)) {}

  const std::vector<std::size_t>& lhs() const { return lhs_; }
  const std::vector<std::size_t>& rhs() const { return rhs_; }

 private:
  std::vector<std::size_t> lhs_;
  std::vector<std::size_t> rhs_;
};

/// Raised when a computation produces NaN/Inf where the contract forbids it.
class NumericError : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Raised by file readers. `kind` distinguishes the failure so tests and the
/// CLI can branch on it without parsing messages.
class FormatError : public Error {
 public:
  enum class Kind { BadMagic, Truncated, CountMismatch, Ragged, NonNumeric, Io, Parse, Version };

  FormatError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

}  // namespace amix
