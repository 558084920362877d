#pragma once

#include <stdexcept>
#include <string>

namespace stagg {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not conform.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Value outside the mathematical domain of an operation (e.g. log of a non-positive entry).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// API misuse, such as calling backward on a non-scalar output.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent input data.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Invalid numeric parameter.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Configuration rejected; carries the offending line when known.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Data ingestion failure with file/row/column location in the message.
class IngestionError : public Error {
 public:
  using Error::Error;
};

/// Training diverged or could not proceed.
class TrainingError : public Error {
 public:
  using Error::Error;
};

/// Model construction failure (missing table, inconsistent index sets).
class BuildError : public Error {
 public:
  using Error::Error;
};

/// File parse failure with line number.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Heuristic could not produce a solution.
class HeuristicError : public Error {
 public:
  using Error::Error;
};

}  // namespace stagg
