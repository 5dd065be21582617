#pragma once

#include <stdexcept>
#include <string>

namespace lamcast {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes do not agree with what an operation requires.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// An index (edge endpoint, node id, ...) is out of range.
class IndexError : public Error {
 public:
  using Error::Error;
};

/// A caller violated an operation's precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf appeared in a computed value.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Invalid grid / mesh / graph specification.
class SpecError : public Error {
 public:
  using Error::Error;
};

/// Mesh levels do not line up as required for merging.
class AlignmentError : public Error {
 public:
  using Error::Error;
};

/// Invalid physics or run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A container file could not be parsed.
class CorruptFileError : public Error {
 public:
  using Error::Error;
};

/// A container file was written by an incompatible format version.
class VersionError : public Error {
 public:
  using Error::Error;
};

}  // namespace lamcast
