#pragma once

#include <stdexcept>
#include <string>

namespace fd {

// Base class for everything this library throws. The CLI maps concrete
// subclasses onto exit codes, so new error kinds should subclass one of
// the types below rather than throwing std:: exceptions directly.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Tensor dimension mismatch. Messages name both offending shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Index outside a container or frame range.
class BoundsError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration value or unknown config field.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed input file; carries a line number when one is known.
class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what, long line = -1)
      : Error(line >= 0 ? what + " (line " + std::to_string(line) + ")" : what),
        line_(line) {}
  long line() const { return line_; }

 private:
  long line_;
};

// Structurally valid file whose contents violate the schema (e.g. a
// feature row with the wrong dimension).
class SchemaError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf surfaced by a numeric op. Training aborts on this.
class NumericError : public Error {
 public:
  using Error::Error;
};

// A metric has no defined value on the given records (e.g. no ground
// truth labels at all). Never silently reported as 0.
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

}  // namespace fd
