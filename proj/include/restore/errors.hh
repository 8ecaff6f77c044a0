#pragma once

#include <stdexcept>
#include <string>

namespace restore {

// Error taxonomy maps onto CLI exit codes: usage -> 1, data/format -> 2,
// numeric failure -> 3.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeError : Error {
  using Error::Error;
};

struct DataError : Error {
  using Error::Error;
};

struct NumericError : Error {
  using Error::Error;
};

struct UsageError : Error {
  using Error::Error;
};

}  // namespace restore
