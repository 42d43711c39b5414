#pragma once

#include <stdexcept>
#include <string>

namespace cdcl {

enum class ErrorCode {
  ZeroVector,
  EmptyInput,
  DimensionMismatch,
  InvalidConfig,
  EmptyPositives,
  TemperatureNonPositive,
  MissingPseudoLabels,
  LabelOutOfRange,
  EmptyClass,
  NotPrepared,
  InvalidRatio,
  IoError,
  FormatError,
  NumericalFailure,
};

const char* to_string(ErrorCode code);

// Single exception type for the library; the code distinguishes failure kinds.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace cdcl
