#pragma once

#include <stdexcept>
#include <string>

namespace protoclass {

// Error categories map one-to-one onto CLI exit codes.
enum class ErrorKind {
  kValidation = 2,  // bad arguments, configs, or preconditions
  kData = 3,        // malformed or inconsistent files and datasets
  kDivergence = 4,  // non-finite or exploding numerics
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& message)
      : Error(ErrorKind::kValidation, message) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& message)
      : Error(ErrorKind::kData, message) {}
};

class DivergenceError : public Error {
 public:
  explicit DivergenceError(const std::string& message)
      : Error(ErrorKind::kDivergence, message) {}
};

const char* to_string(ErrorKind kind) noexcept;

}  // namespace protoclass
