#pragma once

#include <stdexcept>
#include <string>

namespace linfreq {

// Base for every error raised by the library. CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input violates a documented precondition or invariant.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// On-disk data disagrees with its own manifest (sizes, offsets, ranges).
class IntegrityError : public Error {
 public:
  using Error::Error;
};

// File could not be read, parsed, or written.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace linfreq
