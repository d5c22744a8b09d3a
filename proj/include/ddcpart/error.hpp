#pragma once

#include <stdexcept>
#include <string>

namespace ddcpart {

// Base class for every error raised by the library. The CLI maps the
// subclasses onto its exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad function argument (out-of-range fraction, negative weight, ...).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

// Input file lacks a required column.
class SchemaError : public Error {
 public:
  using Error::Error;
};

// Malformed cell or line in an input file.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, long row) : Error(what), row_(row) {}
  long row() const { return row_; }

 private:
  long row_;
};

// Data violates a structural invariant (gaps in periods, duplicate rows,
// non-stochastic transition rows, mismatched dimensions).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// The data carries no information for the requested quantity, e.g. a
// transition objective that is identically zero at the root.
class DegenerateDataError : public Error {
 public:
  using Error::Error;
};

}  // namespace ddcpart
