#pragma once

// Discrete-event network: Peers on hosts, FIFO duplex links with fixed
// one-way latency, virtual time in nanoseconds. Each host runs one
// activation at a time; an activation's duration comes from the crypto
// operations it performs (CostModel), and its frames leave when it ends.

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "spx/crypto.hpp"
#include "spx/peer.hpp"

namespace spx::net {

struct CostModel {
  std::uint64_t activation_ns = 2'000;
  std::uint64_t keygen_ns = 40'000;
  std::uint64_t dh_ns = 45'000;
  std::uint64_t sign_ns = 25'000;
  std::uint64_t verify_ns = 60'000;
  std::uint64_t aead_call_ns = 1'000;
  // Per thousand bytes sealed or opened.
  std::uint64_t aead_kb_ns = 1'000;
  std::uint64_t hash_call_ns = 500;

  std::uint64_t cost(const crypto::OpCounters& delta) const;
};

using NodeId = std::uint32_t;
using HostId = std::uint32_t;

struct TraceEvent {
  std::uint64_t seq = 0;
  std::uint64_t sent_ns = 0;
  std::uint64_t time_ns = 0;  // delivery
  std::string link;
  std::uint32_t conn = 0;
  std::string from;
  std::string to;
  FlightTag flight;
  wire::WireMessage msg;  // payload dropped when payload tracing is off
  std::size_t bytes = 0;  // wire size
  std::size_t spx_payload = 0;
  std::size_t spx_framing = 0;
};

struct ActivationRecord {
  NodeId node = 0;
  std::uint64_t start_ns = 0;
  std::uint64_t end_ns = 0;
};

struct RunStats {
  bool deadlock = false;
  std::vector<std::string> stuck;
  std::uint64_t end_ns = 0;
  std::size_t deliveries = 0;
};

class Simulator {
 public:
  explicit Simulator(CostModel cost = {}, bool trace_payloads = true);
  ~Simulator();
  Simulator(const Simulator&) = delete;
  Simulator& operator=(const Simulator&) = delete;

  HostId add_host(std::string name);
  // Clients are the nodes whose completion the run waits for.
  NodeId add_node(std::string name, HostId host, std::unique_ptr<Peer> peer, bool client = false,
                  std::uint64_t start_ns = 0);
  void connect(NodeId a, Port pa, NodeId b, Port pb, std::uint64_t latency_ns, std::string label,
               std::uint32_t conn = 0);

  RunStats run(std::size_t max_deliveries = 50'000'000);

  std::size_t node_count() const;
  Peer& peer(NodeId n);
  const std::string& name(NodeId n) const;
  std::optional<std::uint64_t> handshake_ns(NodeId n) const;
  std::optional<std::uint64_t> finished_ns(NodeId n) const;
  const std::vector<TraceEvent>& trace() const { return trace_; }
  const std::vector<ActivationRecord>& activations() const { return activations_; }

  void write_jsonl(std::ostream& out) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::vector<TraceEvent> trace_;
  std::vector<ActivationRecord> activations_;
};

std::string trace_event_json(const TraceEvent& e);

}  // namespace spx::net
