#pragma once

#include <stdexcept>
#include <string>

namespace bpre {

// Malformed or inconsistent input (configuration documents, arguments).
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A configured resource bound (population cap, enumeration cap) was hit.
class CapExceeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A model-level precondition failed at run time (e.g. extinction observed).
class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace bpre
