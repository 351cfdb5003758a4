#pragma once

#include <stdexcept>
#include <string>

namespace slipforge {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define SLIPFORGE_ERROR(Name)              \
  class Name : public Error {              \
   public:                                 \
    explicit Name(const std::string& what) \
        : Error(#Name ": " + what) {}      \
  }

SLIPFORGE_ERROR(InvalidRotation);
SLIPFORGE_ERROR(EmptyInput);
SLIPFORGE_ERROR(ParamError);
SLIPFORGE_ERROR(NumericalDivergence);
SLIPFORGE_ERROR(InputError);
SLIPFORGE_ERROR(AlignmentError);
SLIPFORGE_ERROR(InternalError);
SLIPFORGE_ERROR(BalanceError);
SLIPFORGE_ERROR(SplitError);
SLIPFORGE_ERROR(EvalError);
SLIPFORGE_ERROR(SpecError);
SLIPFORGE_ERROR(IoError);

#undef SLIPFORGE_ERROR

/// Malformed event or subsample file. `location` is a 1-based line number for
/// text input and a byte offset for binary input.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, long long location)
      : Error("ParseError at " + std::to_string(location) + ": " + what),
        location_(location) {}
  long long location() const noexcept { return location_; }

 private:
  long long location_;
};

/// Training produced a non-finite loss.
class DivergedError : public Error {
 public:
  explicit DivergedError(int epoch)
      : Error("DivergedError: non-finite loss in epoch " + std::to_string(epoch)),
        epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

}  // namespace slipforge
