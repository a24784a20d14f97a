#pragma once

#include <stdexcept>
#include <string>

namespace opf3 {

// Base class for all library faults. Input/data problems and numerical
// failures derive from here so callers can catch one type at the boundary.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class CycleDetected : public Error {
 public:
  using Error::Error;
};

class DisconnectedBus : public Error {
 public:
  using Error::Error;
};

class PhaseMismatch : public Error {
 public:
  using Error::Error;
};

class UnknownBus : public Error {
 public:
  using Error::Error;
};

// Malformed feeder document (carries a JSON pointer / field hint).
class SchemaError : public Error {
 public:
  using Error::Error;
};

// Structurally valid document whose contents violate model invariants.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class PowerFlowDiverged : public Error {
 public:
  using Error::Error;
};

// A state object was produced by a different network or wrong solver model.
class StateMismatch : public Error {
 public:
  using Error::Error;
};

class NumericalDegeneracy : public Error {
 public:
  using Error::Error;
};

class IndexMismatch : public Error {
 public:
  using Error::Error;
};

class InternalProtocolError : public Error {
 public:
  using Error::Error;
};

class MissingUpload : public Error {
 public:
  using Error::Error;
};

class TargetNotInSubtree : public Error {
 public:
  using Error::Error;
};

class InsufficientSamples : public Error {
 public:
  using Error::Error;
};

}  // namespace opf3
