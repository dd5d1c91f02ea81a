#pragma once

#include <stdexcept>
#include <string>

namespace magdiff {

/// Base of every error the library throws. `exit_code` follows the CLI
/// contract: 1 usage, 2 IO, 3 numeric failure, 4 acceptance violation.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what, int exit_code = 1)
      : std::runtime_error(what), exit_code_(exit_code) {}
  int exit_code() const { return exit_code_; }

 private:
  int exit_code_;
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(what, 1) {}
};

class ValueError : public Error {
 public:
  explicit ValueError(const std::string& what) : Error(what, 1) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(what, 2) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(what, 3) {}
};

class AcceptanceError : public Error {
 public:
  explicit AcceptanceError(const std::string& what) : Error(what, 4) {}
};

}  // namespace magdiff
