#pragma once

#include <stdexcept>
#include <string>

namespace gaf {

// Shapes that cannot be combined by an operation.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Input outside an operation's mathematical domain (log of a non-positive
// value, non-finite matrix entries, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// A caller broke a documented precondition.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// A NaN or Inf appeared in a computed value while finiteness checks are on.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid model specification, detected before anything is allocated.
class SpecError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace gaf
