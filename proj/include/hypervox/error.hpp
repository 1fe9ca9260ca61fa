#pragma once

#include <stdexcept>
#include <string>

namespace hypervox {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Element counts or tensor shapes that do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A kernel/stride/pad combination that yields no valid output position.
class GeometryError : public Error {
 public:
  using Error::Error;
};

/// A network description whose shape trace or layer counts are invalid.
class ArchitectureError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent user input (files, flags, splits).
class InputError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

class CheckpointVersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class CheckpointShapeError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class TruncatedBlobError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

}  // namespace hypervox
