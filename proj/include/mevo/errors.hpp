#pragma once

#include <stdexcept>
#include <string>

namespace mevo {

/// Raised for invalid configuration values: stream parameters, scenario files,
/// routing dimensions, out-of-range metronome settings.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a session cannot start (socket bind, audio device).
class StartupError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised by log parsing and analysis on malformed or insufficient input.
class AnalysisError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mevo
