#pragma once

#include <stdexcept>
#include <string>

namespace usgd {

// Bad arguments to an operation (dimension mismatch, out-of-range values).
struct InvalidInputError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A caller violated a stated precondition (e.g. a bound check outside the
// regime where its inequality is defined).
struct PreconditionError : std::logic_error {
  using std::logic_error::logic_error;
};

// The noise level is too large for the requested step-size regime; the
// message names the threshold and the regime to use instead.
struct RegimeMismatchError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// The label provider failed while a query was in flight.
struct QueryError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input file; message carries the line number.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Structurally valid file with contents outside the declared schema
// (unknown label alphabet, unknown config key, ...).
struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Synthetic generation could not satisfy its postconditions.
struct GenerationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Too few usable points for an estimate.
struct InsufficientDataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace usgd
