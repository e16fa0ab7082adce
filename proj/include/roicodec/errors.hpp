#pragma once

#include <stdexcept>
#include <string>

namespace roicodec {

// Base for all library errors. `kind()` is a short stable tag used by the CLI
// to print machine-parseable diagnostics.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

// Tensor shapes that do not fit an operation.
class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& what) : Error("dimension", what) {}
};

// API misuse: non-scalar loss, missing gradients, unknown modes.
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& what) : Error("contract", what) {}
};

// Out-of-range user data (mask values, config values).
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error("validation", what) {}
};

class CoderError : public Error {
 public:
  explicit CoderError(const std::string& what) : Error("coder", what) {}
};

// Malformed or mismatched bitstreams and checkpoints.
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what) : Error("format", what) {}
};

class ModelMismatchError : public Error {
 public:
  explicit ModelMismatchError(const std::string& what) : Error("model-mismatch", what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error("io", what) {}
};

class TrainingError : public Error {
 public:
  explicit TrainingError(const std::string& what) : Error("training", what) {}
};

}  // namespace roicodec
