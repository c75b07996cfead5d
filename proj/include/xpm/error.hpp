#pragma once

#include <stdexcept>
#include <string>

namespace xpm {

/// Base for every error raised by the engine.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent analysis/simulation configuration. `key()` names
/// the offending entry as a JSON-pointer-like path (e.g. "analyses[1].tau").
class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& message)
      : Error(message), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

/// Problems with input data: missing files, missing columns, no usable rows,
/// violated dataset invariants.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Failures inside a model fit or a derived quantity.
class EstimationError : public Error {
 public:
  using Error::Error;
};

/// Thrown by the WLS solver when MᵀWM is singular; the message names the
/// columns detected as collinear with the preceding ones.
class RankDeficientError : public EstimationError {
 public:
  using EstimationError::EstimationError;
};

}  // namespace xpm
