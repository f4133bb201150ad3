#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace icsim {

/// Invalid dimensions, parameters or experiment configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical routine failed (eigen-solver, bisection, divergence).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A stream whose filtered channel gain vanishes, so its SINR-per-power
/// quantities are undefined.
class DegenerateStreamError : public NumericalError {
 public:
  DegenerateStreamError(int user, int stream, const std::string& what)
      : NumericalError(what), user_(user), stream_(stream) {}
  int user() const { return user_; }
  int stream() const { return stream_; }

 private:
  int user_;
  int stream_;
};

/// Malformed persisted input (channel or beamformer file).
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
        detail_(what),
        offset_(offset) {}
  std::size_t offset() const { return offset_; }
  /// The message without the offset suffix.
  const std::string& detail() const { return detail_; }

 private:
  std::string detail_;
  std::size_t offset_;
};

}  // namespace icsim
