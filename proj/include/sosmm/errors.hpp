#pragma once

#include <stdexcept>
#include <string>

namespace sosmm {

// Base for all library errors.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// A point is outside the set it is evaluated on, or an argument is out of
// the documented domain of an operation.
class DomainError : public Error {
public:
  using Error::Error;
};

// A kernel matrix (or other Gram-like matrix) is too close to singular for
// the requested operation.
class ConditioningError : public Error {
public:
  using Error::Error;
};

// A matrix required to be positive semidefinite is not.
class NotPsdError : public Error {
public:
  using Error::Error;
};

// Malformed problem data (dimension mismatches, inconsistent blocks, ...).
class InvalidProblem : public Error {
public:
  using Error::Error;
};

}  // namespace sosmm
