#pragma once

#include <stdexcept>
#include <string>

namespace ionres {

// Coarse classification used by the CLI to pick an exit code.
enum class ErrorKind { validation, numerical, io };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define IONRES_DEFINE_ERROR(Name, Kind)                                        \
  class Name : public Error {                                                  \
   public:                                                                     \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, #Name ": " + what) {} \
  };

IONRES_DEFINE_ERROR(DomainError, validation)
IONRES_DEFINE_ERROR(DimensionMismatch, validation)
IONRES_DEFINE_ERROR(TruncationError, validation)
IONRES_DEFINE_ERROR(NegativeRate, validation)
IONRES_DEFINE_ERROR(ZeroAmplitude, validation)
IONRES_DEFINE_ERROR(BadHProfile, validation)
IONRES_DEFINE_ERROR(FirstZeroViolation, validation)
IONRES_DEFINE_ERROR(InconsistentScale, validation)
IONRES_DEFINE_ERROR(SizeGuardExceeded, validation)
IONRES_DEFINE_ERROR(ParseError, validation)
IONRES_DEFINE_ERROR(ValidationError, validation)
IONRES_DEFINE_ERROR(SingularSystem, numerical)
IONRES_DEFINE_ERROR(IntegratorFailure, numerical)
IONRES_DEFINE_ERROR(PositivityViolation, numerical)
IONRES_DEFINE_ERROR(QuadratureNotConverged, numerical)
IONRES_DEFINE_ERROR(IoError, io)

#undef IONRES_DEFINE_ERROR

}  // namespace ionres
