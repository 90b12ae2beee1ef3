#pragma once

#include <stdexcept>
#include <string>

namespace dctnet {

// Bad arguments: wrong dimensions, out-of-range coordinates, empty inputs.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Operation called in the wrong state (backward before forward, undo on an
// empty history, mask requested before any click).
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Interaction order violations, e.g. a session that starts with a negative click.
class ProtocolError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Unknown session or model identifier.
class NotFound : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class CheckpointErrorKind {
  io,
  bad_magic,
  unsupported_version,
  truncated,
  malformed,
  mismatch,
};

inline const char* to_string(CheckpointErrorKind kind) {
  switch (kind) {
    case CheckpointErrorKind::io: return "io";
    case CheckpointErrorKind::bad_magic: return "bad_magic";
    case CheckpointErrorKind::unsupported_version: return "unsupported_version";
    case CheckpointErrorKind::truncated: return "truncated";
    case CheckpointErrorKind::malformed: return "malformed";
    case CheckpointErrorKind::mismatch: return "mismatch";
  }
  return "unknown";
}

class CheckpointError : public std::runtime_error {
 public:
  CheckpointError(CheckpointErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  CheckpointErrorKind kind() const noexcept { return kind_; }

 private:
  CheckpointErrorKind kind_;
};

// Image/file decoding problems.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dctnet
