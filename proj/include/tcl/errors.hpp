#pragma once

#include <stdexcept>
#include <string>

namespace tcl {

// Invalid or inconsistent run configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input files, checkpoints, or shape mismatches against stored
// model state (CLI exit code 3).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values encountered during numeric computation (CLI exit code 4).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Violation of an internal API contract; indicates a caller bug rather than
// bad user input.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace tcl
