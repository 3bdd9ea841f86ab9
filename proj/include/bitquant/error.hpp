#pragma once

#include <stdexcept>
#include <string>

namespace bitquant {

// Base of every error raised by the library. The CLI maps UsageError and its
// subclasses to exit status 2, anything else to 1.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Caller-side mistakes: bad arguments, invalid models, malformed files.
class UsageError : public Error {
public:
  using Error::Error;
};

class ArgumentError : public UsageError {
public:
  using UsageError::UsageError;
};

class ValidationError : public UsageError {
public:
  using UsageError::UsageError;
};

// Wrong magic, unknown version or tag.
class FormatError : public UsageError {
public:
  using UsageError::UsageError;
};

// Structurally inconsistent payload (truncation, length mismatch).
class CorruptionError : public UsageError {
public:
  using UsageError::UsageError;
};

class ShapeError : public UsageError {
public:
  using UsageError::UsageError;
};

class IoError : public Error {
public:
  using Error::Error;
};

class OverflowError : public Error {
public:
  using Error::Error;
};

// A broken internal invariant; indicates a bug rather than bad input.
class InvariantError : public Error {
public:
  using Error::Error;
};

}  // namespace bitquant
