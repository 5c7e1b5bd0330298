#pragma once

// Transport-independent endpoint interface. Protocol roles are written as
// Peers; the discrete-event simulator and the loopback socket runner both
// drive them through Io.

#include <cstdint>
#include <optional>
#include <string>

#include "spx/wire.hpp"

namespace spx::net {

// Up faces the server, Down faces the client.
enum class Port : std::uint8_t { Up = 0, Down = 1 };

// Identifies the protocol party and activation that produced a frame.
// Relayed frames keep the tag of their originator.
struct FlightTag {
  std::uint32_t origin = 0;
  std::uint64_t seq = 0;
  friend bool operator==(const FlightTag&, const FlightTag&) = default;
  friend auto operator<=>(const FlightTag&, const FlightTag&) = default;
};

struct Frame {
  wire::WireMessage msg;
  FlightTag flight;
};

class Io {
 public:
  virtual ~Io() = default;
  // Emits a frame originated by this peer in the current activation.
  virtual void send(Port port, wire::WireMessage msg) = 0;
  // Emits a frame on behalf of its originator.
  virtual void forward(Port port, wire::WireMessage msg, FlightTag flight) = 0;
};

enum class PeerStatus { Running, Done, Aborted };

class Peer {
 public:
  virtual ~Peer() = default;
  virtual void start(Io&) {}
  virtual void receive(Port from, const Frame& frame, Io& io) = 0;
  virtual PeerStatus status() const = 0;
  virtual bool handshake_complete() const = 0;
  // Set once status() is Aborted.
  virtual std::string error() const { return {}; }
};

}  // namespace spx::net
