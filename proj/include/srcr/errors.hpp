#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace srcr {

// Base class for everything thrown by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Operand shapes do not line up.
struct DimensionError : Error {
  using Error::Error;
};

// Math outside an op's domain (log of a non-positive entry, ...).
struct DomainError : Error {
  using Error::Error;
};

// Caller broke an API contract (non-scalar loss, missing gradient, q == t, ...).
struct ContractError : Error {
  using Error::Error;
};

// Rejected user-facing configuration value.
struct ConfigError : Error {
  using Error::Error;
};

// Malformed input file. `offset` is the byte position where parsing failed.
struct ParseError : Error {
  ParseError(std::size_t at, const std::string& what)
      : Error("parse error at byte " + std::to_string(at) + ": " + what), offset(at) {}
  std::size_t offset;
};

// Hypergraph or graph structure unusable (zero-degree vertex, k out of range).
struct StructureError : Error {
  using Error::Error;
};

// Retrieval evaluation cannot proceed (no relevant targets anywhere, ...).
struct EvalError : Error {
  using Error::Error;
};

}  // namespace srcr
