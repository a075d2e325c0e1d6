#pragma once

#include <stdexcept>
#include <string>

namespace pathopaint {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument values (ranges, counts, empty inputs).
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Tensor or image dimensions that do not fit the contract.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A precondition on the data itself is violated (non-binary mask, empty foreground, untrained model).
class ContractError : public Error {
 public:
  using Error::Error;
};

class EmptyRegionError : public Error {
 public:
  using Error::Error;
};

class EmptyBankError : public Error {
 public:
  using Error::Error;
};

class ExhaustedClusterError : public Error {
 public:
  using Error::Error;
};

class DegenerateLossError : public Error {
 public:
  using Error::Error;
};

/// Malformed or incompatible file contents.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Failure inside a pipeline stage; carries the stage name for the CLI exit path.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error("stage '" + stage + "' failed: " + what), stage_(std::move(stage)) {}

  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace pathopaint
