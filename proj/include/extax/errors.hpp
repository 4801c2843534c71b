#pragma once

#include <stdexcept>
#include <string>

namespace extax {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad input or configuration. The CLI maps these to exit code 1.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Failures that happen while doing valid work. The CLI maps these to exit code 2.
class RuntimeFailure : public Error {
 public:
  using Error::Error;
};

#define EXTAX_DEFINE_ERROR(Name, Base) \
  class Name : public Base {           \
   public:                             \
    using Base::Base;                  \
  };

// taxonomy
EXTAX_DEFINE_ERROR(UnknownCategory, ValidationError)
EXTAX_DEFINE_ERROR(EmptyText, ValidationError)
EXTAX_DEFINE_ERROR(Unparseable, ValidationError)

// elicitation
EXTAX_DEFINE_ERROR(TransportError, RuntimeFailure)
EXTAX_DEFINE_ERROR(AllAnnotatorsFailed, RuntimeFailure)

// smoothing
EXTAX_DEFINE_ERROR(NoValidVotes, ValidationError)
EXTAX_DEFINE_ERROR(DomainError, ValidationError)

// numerics / models
EXTAX_DEFINE_ERROR(ShapeError, ValidationError)
EXTAX_DEFINE_ERROR(NonScalarLoss, ValidationError)
EXTAX_DEFINE_ERROR(EmptySequence, ValidationError)
EXTAX_DEFINE_ERROR(DimensionMismatch, ValidationError)
EXTAX_DEFINE_ERROR(AllKeysMasked, ValidationError)
EXTAX_DEFINE_ERROR(MissingStage1, ValidationError)
EXTAX_DEFINE_ERROR(Diverged, RuntimeFailure)

// metrics
EXTAX_DEFINE_ERROR(LengthMismatch, ValidationError)
EXTAX_DEFINE_ERROR(EmptyInput, ValidationError)

// files
EXTAX_DEFINE_ERROR(ParseError, ValidationError)
EXTAX_DEFINE_ERROR(DuplicateId, ValidationError)
EXTAX_DEFINE_ERROR(BadMagic, ValidationError)
EXTAX_DEFINE_ERROR(TruncatedRecord, ValidationError)
EXTAX_DEFINE_ERROR(DimMismatch, ValidationError)
EXTAX_DEFINE_ERROR(IoError, RuntimeFailure)

#undef EXTAX_DEFINE_ERROR

}  // namespace extax
