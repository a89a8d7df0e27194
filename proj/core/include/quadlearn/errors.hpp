#pragma once

#include <stdexcept>
#include <string>

namespace quadlearn {

/// Inconsistent shapes, invalid presets, unknown keys.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad runtime input to an otherwise valid operation (e.g. a negative ratio).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values during learning. `where` names the layer or loss term.
class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& what, std::string where)
      : std::runtime_error(what + " (" + where + ")"), where_(std::move(where)) {}
  const std::string& where() const noexcept { return where_; }

 private:
  std::string where_;
};

/// The simulator produced a non-finite state; the episode is aborted.
class SimulationFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace quadlearn
