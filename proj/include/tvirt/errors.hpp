#pragma once

#include <stdexcept>
#include <string>

namespace tvirt {

// Malformed or out-of-contract input data (bad files, out-of-range scores,
// unknown labels, unobserved cells where observed ones are required).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A constraint cannot be met: no valid rectangle, starved rows under the
// degree floor, exhausted repair candidates.
class InfeasibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerically undefined result, e.g. a correlation of a constant vector.
class UndefinedError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace tvirt
