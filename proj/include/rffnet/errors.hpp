#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rffnet {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes do not line up.
class ShapeError : public Error {
  public:
    using Error::Error;
};

/// A scalar or count argument is outside its admissible range.
class ParameterError : public Error {
  public:
    using Error::Error;
};

/// Dataset content is unusable (labels out of range, empty data, ...).
class DataError : public Error {
  public:
    using Error::Error;
};

/// Malformed input file. Carries the 1-based line number of the offending line.
class ParseError : public DataError {
  public:
    ParseError(const std::string& source, std::size_t line, const std::string& what)
        : DataError(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

  private:
    std::size_t line_;
};

/// A NaN or infinity appeared where finite values are required.
class NumericError : public Error {
  public:
    using Error::Error;
};

/// Symmetric-only routine received a matrix that is not symmetric.
class SymmetryError : public ParameterError {
  public:
    using ParameterError::ParameterError;
};

}  // namespace rffnet
