#pragma once

#include <stdexcept>
#include <string>

namespace cseg {

/// Root of every error raised by the engine. The message always starts with
/// the name of the operation that failed.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define CSEG_DECLARE_ERROR(Name)          \
  class Name : public Error {             \
   public:                                \
    using Error::Error;                   \
  };

CSEG_DECLARE_ERROR(DegenerateVolume)
CSEG_DECLARE_ERROR(InvalidMode)
CSEG_DECLARE_ERROR(NoForeground)
CSEG_DECLARE_ERROR(PadTooLarge)
CSEG_DECLARE_ERROR(ShapeError)
CSEG_DECLARE_ERROR(GeometryError)
CSEG_DECLARE_ERROR(CheckpointError)
CSEG_DECLARE_ERROR(EmptyRegion)
CSEG_DECLARE_ERROR(ClassAbsent)
CSEG_DECLARE_ERROR(FormatError)
CSEG_DECLARE_ERROR(ConfigError)

#undef CSEG_DECLARE_ERROR

/// Non-finite training loss. Carries the iteration where it happened.
class DivergedError : public Error {
 public:
  DivergedError(const std::string& what, long iteration)
      : Error(what), iteration_(iteration) {}
  long iteration() const { return iteration_; }

 private:
  long iteration_;
};

}  // namespace cseg
