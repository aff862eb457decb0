#pragma once

#include <stdexcept>

namespace mir {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor or operation shape violations.
struct ShapeError : Error {
  using Error::Error;
};

// Malformed input files: CSV, manifest, checkpoint, grid.
struct DataError : Error {
  using Error::Error;
};

// Non-finite values or failed numeric checks.
struct NumericError : Error {
  using Error::Error;
};

}  // namespace mir
