#pragma once

#include <stdexcept>
#include <string>

namespace easyhec {

// Error classes map onto distinct CLI exit codes (see tools/easyhec.cpp).
enum class ErrorKind {
  kInvalidArgument,
  kIo,
  kParse,
  kValidation,
  kDimensionMismatch,
  kLengthMismatch,
  kDegenerate,
  kNonConvergence,
  kNumerical,
  kExhausted,
  kVisibility,
  kGeneration,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define EASYHEC_DEFINE_ERROR(Name, Kind)                                  \
  class Name : public Error {                                             \
   public:                                                                \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {} \
  };

EASYHEC_DEFINE_ERROR(InvalidArgument, kInvalidArgument)
EASYHEC_DEFINE_ERROR(IoError, kIo)
EASYHEC_DEFINE_ERROR(ParseError, kParse)
EASYHEC_DEFINE_ERROR(ValidationError, kValidation)
EASYHEC_DEFINE_ERROR(DimensionMismatch, kDimensionMismatch)
EASYHEC_DEFINE_ERROR(LengthMismatch, kLengthMismatch)
EASYHEC_DEFINE_ERROR(DegeneracyError, kDegenerate)
EASYHEC_DEFINE_ERROR(NonConvergenceError, kNonConvergence)
EASYHEC_DEFINE_ERROR(NumericalError, kNumerical)
EASYHEC_DEFINE_ERROR(ExhaustionError, kExhausted)
EASYHEC_DEFINE_ERROR(VisibilityError, kVisibility)
EASYHEC_DEFINE_ERROR(GenerationError, kGeneration)

#undef EASYHEC_DEFINE_ERROR

}  // namespace easyhec
