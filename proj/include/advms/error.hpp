#pragma once

#include <stdexcept>
#include <string>

namespace advms {

/// Base class for every error raised by the library. The CLI maps the
/// concrete subclasses onto distinct exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Unknown identifiers, unknown config keys, malformed values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Invalid argument values (empty batch, M < 1, n > N, ...).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Tensor or input shape does not match what an operation expects.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Class index outside [0, C).
class IndexError : public Error {
 public:
  using Error::Error;
};

/// Malformed file contents (bad magic, truncation, out-of-range bytes).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// File could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace advms
