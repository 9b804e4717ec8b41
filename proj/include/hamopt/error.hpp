#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hamopt {

enum class ErrorKind {
  NonFiniteValue,
  ShapeError,
  InvalidStep,
  InvalidSteps,
  InvalidArchitecture,
  CorruptCheckpoint,
  DimsMismatch,
  UnsupportedVersion,
  NotAffineInControl,
  EmptyShape,
  FullShape,
  SamplingFailed,
  EmptyBatch,
  TrainingDiverged,
  MissingPhase1,
  SchemaError,
  EnvMismatch,
  IoError,
  InvalidConfig,
};

std::string_view to_string(ErrorKind kind);

// Every failure in the library surfaces as this exception; callers branch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace hamopt
