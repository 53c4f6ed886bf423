#pragma once

#include <stdexcept>
#include <string>

namespace levitate {

/// Invalid parameter record or configuration value. `key()` is the dotted
/// config path when the error came from a file ("protocol.s_low").
class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(const std::string &what, std::string key = {})
      : std::runtime_error(key.empty() ? what : key + ": " + what),
        key_(std::move(key)) {}

  const std::string &key() const noexcept { return key_; }

private:
  std::string key_;
};

/// Failure during a simulation or fit: non-finite state, invariant drift,
/// non-convergence, degenerate data.
class NumericalError : public std::runtime_error {
public:
  NumericalError(const std::string &operation, const std::string &what)
      : std::runtime_error(operation + ": " + what), operation_(operation) {}

  const std::string &operation() const noexcept { return operation_; }

private:
  std::string operation_;
};

} // namespace levitate
