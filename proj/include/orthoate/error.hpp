#pragma once

#include <stdexcept>
#include <string>

namespace orthoate {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define ORTHOATE_DEFINE_ERROR(Name)   \
  class Name : public Error {         \
   public:                            \
    using Error::Error;               \
  };

// score construction
ORTHOATE_DEFINE_ERROR(DegenerateMoment)
ORTHOATE_DEFINE_ERROR(InvalidOrder)
ORTHOATE_DEFINE_ERROR(SingularSystem)
ORTHOATE_DEFINE_ERROR(InvalidArgument)

// learners
ORTHOATE_DEFINE_ERROR(NonFinite)
ORTHOATE_DEFINE_ERROR(MissingClass)
ORTHOATE_DEFINE_ERROR(ShapeMismatch)

// estimation
ORTHOATE_DEFINE_ERROR(EmptyFold)
ORTHOATE_DEFINE_ERROR(EmptyResidualSet)
ORTHOATE_DEFINE_ERROR(ZeroDenominator)

// io
ORTHOATE_DEFINE_ERROR(ParseError)
ORTHOATE_DEFINE_ERROR(SchemaError)
ORTHOATE_DEFINE_ERROR(ConfigError)
ORTHOATE_DEFINE_ERROR(IoError)

#undef ORTHOATE_DEFINE_ERROR

}  // namespace orthoate
