#pragma once

#include <stdexcept>
#include <string>

namespace eos {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad user input: malformed loss string, infeasible initialization, bad flags.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  enum class Kind {
    kDiverged,
    kBelowThreshold,
    kNoSignChange,
    kNoConvergence,
    kUndefined,
    kBreakdown,
  };

  NumericError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace eos
