#pragma once

#include <stdexcept>
#include <string>

namespace pvr {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller-supplied parameter is out of its documented range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Grid geometry is invalid (zero dims, non-positive spacing, non-orthogonal axes).
class GeometryError : public Error {
 public:
  using Error::Error;
};

/// Registration could not run (insufficient overlap between inputs).
class RegistrationFailure : public Error {
 public:
  using Error::Error;
};

/// File could not be read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Input is empty or degenerate such that no result can be produced.
class EmptyInputError : public Error {
 public:
  using Error::Error;
};

}  // namespace pvr
