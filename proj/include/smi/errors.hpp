#pragma once

#include <stdexcept>
#include <string>

namespace smi {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller broke a documented precondition (push on a closed channel, oversized pack, ...).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

class MalformedPacket : public Error {
 public:
  using Error::Error;
};

/// Document or file could not be parsed.
class ParseError : public Error {
 public:
  using Error::Error;
};

class TopologyError : public Error {
 public:
  using Error::Error;
};

/// Route generation failure or a packet that the loaded tables cannot route.
class RoutingError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Peers disagreed on channel parameters or a flow-control invariant broke.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

/// The run stopped making progress; what() carries the queue/program dump.
class DeadlockError : public Error {
 public:
  using Error::Error;
};

}  // namespace smi
