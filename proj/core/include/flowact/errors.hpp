#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace flowact {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define FLOWACT_DEFINE_ERROR(Name)            \
  class Name : public Error {                 \
   public:                                    \
    using Error::Error;                       \
  }

FLOWACT_DEFINE_ERROR(DegenerateInput);
FLOWACT_DEFINE_ERROR(SizeMismatch);
FLOWACT_DEFINE_ERROR(InvalidCount);
FLOWACT_DEFINE_ERROR(InvalidArgument);
FLOWACT_DEFINE_ERROR(BehindCamera);
FLOWACT_DEFINE_ERROR(NonPositiveDepth);
FLOWACT_DEFINE_ERROR(IndexOutOfRange);
FLOWACT_DEFINE_ERROR(EmptyResult);
FLOWACT_DEFINE_ERROR(EmptyInput);
FLOWACT_DEFINE_ERROR(DegenerateBackground);
FLOWACT_DEFINE_ERROR(NoMovingObject);
FLOWACT_DEFINE_ERROR(UnknownTask);
FLOWACT_DEFINE_ERROR(UnknownObject);
FLOWACT_DEFINE_ERROR(UnresolvedBinding);
FLOWACT_DEFINE_ERROR(NoFeasibleGrasp);
FLOWACT_DEFINE_ERROR(InfeasibleTrajectory);
FLOWACT_DEFINE_ERROR(EmptyRender);
FLOWACT_DEFINE_ERROR(IoError);
FLOWACT_DEFINE_ERROR(ConfigError);

#undef FLOWACT_DEFINE_ERROR

using MismatchedSizes = SizeMismatch;

/// Binary payload could not be decoded; `offset()` is the byte at which decoding stopped.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Payload decoded but a field violates the schema.
class SchemaError : public Error {
 public:
  SchemaError(const std::string& field, const std::string& what)
      : Error("field '" + field + "': " + what), field_(field) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// A flow sample violates the FlowSequence invariants.
class CorruptFlow : public Error {
 public:
  CorruptFlow(std::size_t t, std::size_t n, const std::string& what)
      : Error("sample (t=" + std::to_string(t) + ", n=" + std::to_string(n) + "): " + what),
        t_(t),
        n_(n) {}
  std::size_t timestep() const noexcept { return t_; }
  std::size_t point() const noexcept { return n_; }

 private:
  std::size_t t_;
  std::size_t n_;
};

}  // namespace flowact
