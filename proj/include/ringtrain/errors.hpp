#pragma once

#include <stdexcept>
#include <string>

namespace ringtrain {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// Backward called without a matching forward, or after the weights moved.
class StateError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

class LayoutError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Failure of a point-to-point or collective operation. `rank` names the
// rank that failed (or -1 if unknown).
class CommError : public Error {
 public:
  CommError(const std::string& what, int rank = -1)
      : Error(what), rank_(rank) {}
  int rank() const noexcept { return rank_; }

 private:
  int rank_;
};

class TimeoutError : public CommError {
 public:
  using CommError::CommError;
};

class PeerClosedError : public CommError {
 public:
  using CommError::CommError;
};

class TagMismatchError : public CommError {
 public:
  using CommError::CommError;
};

// Bad magic, truncated frame, or a payload length that does not match
// what the collective expects.
class ProtocolError : public CommError {
 public:
  using CommError::CommError;
};

class DisconnectError : public CommError {
 public:
  using CommError::CommError;
};

}  // namespace ringtrain
