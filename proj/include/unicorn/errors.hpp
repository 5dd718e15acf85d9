#pragma once

#include <stdexcept>
#include <string>

namespace unicorn {

/// Base class for every error raised by the library. The CLI maps each
/// subclass onto an exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Input bytes do not follow a known format (bad magic, bad header).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Header and payload disagree, or a checksum does not match.
class CorruptionError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class InfeasibleSplitError : public Error {
 public:
  using Error::Error;
};

class MissingPrerequisiteError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace unicorn
