#pragma once

#include <stdexcept>
#include <string>

namespace octs {

// Base of every error the toolkit throws. The CLI exits with 1 for
// ArgumentError and 2 for the others.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Malformed or truncated container data.
class FormatError : public Error {
public:
  using Error::Error;
};

// Values that violate a domain constraint (e.g. UNIT data outside [0,1]).
class DataError : public Error {
public:
  using Error::Error;
};

class IoError : public Error {
public:
  using Error::Error;
};

// Invalid parameters or shapes handed to an operation.
class ArgumentError : public Error {
public:
  using Error::Error;
};

// Input for which the requested quantity is undefined (all-zero images,
// zero-variance regions, unattainable contrast windows).
class DegenerateInput : public Error {
public:
  using Error::Error;
};

} // namespace octs
