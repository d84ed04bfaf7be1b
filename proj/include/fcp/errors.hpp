#pragma once

#include <stdexcept>
#include <string>

namespace fcp {

/// Base class for all library errors.
struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed or schema-violating input text.
struct ParseError : Error {
  using Error::Error;
};

/// Structural validation failure (bad references, duplicate names, ...).
struct ValidationError : Error {
  using Error::Error;
};

/// Boundary / type mismatch between composable pieces.
struct TypeError : Error {
  using Error::Error;
};

/// Dimension mismatch in the semantic layer.
struct DimensionError : Error {
  using Error::Error;
};

/// Walker stuck at a vertex with no admissible out-edge.
struct DeadEndError : Error {
  using Error::Error;
};

/// Walker exceeded its restart budget on length overflows.
struct RestartsExhaustedError : Error {
  using Error::Error;
};

/// Degenerate numerical situation (e.g. every importance weight is -inf).
struct NumericalError : Error {
  using Error::Error;
};

}  // namespace fcp
