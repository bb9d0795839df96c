#pragma once

#include <stdexcept>
#include <string>

namespace lfd {

// Shape or extent mismatch between operands.
class DimensionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration: architecture, loss weights, manifests vs. configs.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller violated an API precondition (e.g. backward on a non-scalar).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// A NaN or Inf was produced.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed checkpoint or manifest content.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DegenerateHullError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace lfd
