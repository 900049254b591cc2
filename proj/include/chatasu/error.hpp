#pragma once

#include <stdexcept>
#include <string>

namespace chatasu {

// Base for every failure the toolkit reports. The CLI maps DataError to exit
// code 1 and UsageError to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad input data: unreadable files, malformed records, violated invariants.
class DataError : public Error {
 public:
  using Error::Error;
};

// Caller misuse: inconsistent configuration, violated preconditions.
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace chatasu
