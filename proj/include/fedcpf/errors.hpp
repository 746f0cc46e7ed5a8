#pragma once

#include <stdexcept>
#include <string>

namespace fedcpf {

// Precondition violated by the caller (shape mismatch, out-of-range fraction, ...).
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A computation produced a non-finite value.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad or incomplete experiment configuration. `field` names the offending key.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& what)
      : std::runtime_error("config field '" + field + "': " + what), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

// Synthetic data could not be generated for the requested spec.
class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Methods in one comparison were not run on the same data partition.
class FairnessError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(bool cond, const char* what) {
  if (!cond) throw ContractError(what);
}

}  // namespace detail
}  // namespace fedcpf
