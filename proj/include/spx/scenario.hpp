#pragma once

// Simulated deployments: direct end-to-end, split proxy and SPX edge, plus
// the cuckoo and TOCTTOU adversaries and the accounting drawn from traces.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "spx/endpoints.hpp"
#include "spx/netsim.hpp"

namespace spx::net {

enum class Protocol { Tlx, NoiXe };
enum class Mode { E2E, Split, Spx };
std::string_view to_string(Protocol p);
std::string_view to_string(Mode m);
Protocol parse_protocol(std::string_view s);
Mode parse_mode(std::string_view s);

// One-way latencies, half of the measured client-proxy and proxy-server RTTs.
struct Latencies {
  std::uint64_t client_edge_ns = 482'000;
  std::uint64_t edge_server_ns = 450'500;
  std::uint64_t client_server_ns = 481'000;
};

inline constexpr std::string_view kLinkClientEdge = "client-edge";
inline constexpr std::string_view kLinkEdgeServer = "edge-server";
inline constexpr std::string_view kLinkClientServer = "client-server";

struct ScenarioConfig {
  Protocol protocol = Protocol::Tlx;
  noise::Pattern pattern = noise::Pattern::XX;
  Mode mode = Mode::Spx;
  core::BindingMode binding = core::BindingMode::Spx;
  std::size_t clients = 1;
  // Per-connection workloads; connection i uses workloads[i % size]. Empty: no data.
  std::vector<Workload> workloads;
  std::size_t grant_size = core::kNaturalGrantSize;
  std::size_t cert_size = tlx::kDefaultCertSize;
  bool server_spx_capable = true;
  Latencies latency;
  CostModel cost;
  std::uint64_t client_stagger_ns = 0;
  std::size_t enclave_cap_bytes = see::kUnlimited;
  bool trace_payloads = true;
  std::uint64_t seed = 1;
};

struct LinkAccount {
  std::size_t frames = 0;
  std::size_t bytes = 0;
  std::size_t flights = 0;
  std::size_t spx_payload = 0;
  std::size_t spx_framing = 0;
};

struct ConnectionResult {
  PeerStatus client = PeerStatus::Running;
  PeerStatus server = PeerStatus::Running;
  std::optional<PeerStatus> edge;
  std::string client_error;
  std::string server_error;
  std::string edge_error;
  std::optional<std::uint64_t> handshake_ns;
  std::optional<std::uint64_t> done_ns;
  std::vector<Observed> observed;
  std::size_t bytes_echoed = 0;
  bool client_complete = false;
  bool server_complete = false;
  bool spx_established = false;
  std::vector<core::Phase> edge_phases;
  // Initiator-to-responder key as each party holds it.
  std::optional<Key32> client_key;
  std::optional<Key32> server_key;
  std::optional<Key32> edge_key;
  // NoiXe responder-to-initiator key.
  std::optional<Key32> client_reverse_key;
  std::optional<Key32> server_reverse_key;
  std::optional<Key32> edge_reverse_key;

  bool success() const { return client == PeerStatus::Done && client_complete; }
  bool keys_agree() const;
};

struct ScenarioResult {
  std::vector<ConnectionResult> connections;
  std::map<std::string, LinkAccount, std::less<>> links;
  RunStats run;
  std::vector<TraceEvent> trace;
  std::vector<ActivationRecord> activations;
  std::vector<std::string> node_names;

  bool all_success() const;
  LinkAccount link(std::string_view label) const;
  // The server's leg: edge-server, or client-server for the direct deployment.
  LinkAccount server_link() const;
  double mean_handshake_ns() const;
  std::uint64_t max_done_ns() const;
  void write_jsonl(std::ostream& out) const;
};

ScenarioResult run_scenario(const ScenarioConfig& cfg);

LinkAccount account(const std::vector<TraceEvent>& trace, std::string_view label);

// SPX relative to the split baseline on the server's leg.
struct Overhead {
  long extra_flights = 0;
  long extra_bytes = 0;  // total wire bytes, framing included
  std::size_t spx_payload = 0;  // request/response values, report and grant payloads
  std::size_t spx_framing = 0;
};
Overhead overhead(const ScenarioResult& spx, const ScenarioResult& split);

// True if any traced payload contains `secret` as a contiguous substring.
bool trace_contains(const std::vector<TraceEvent>& trace, ByteView secret);

// ---------------------------------------------------------------------------
// Adversaries

enum class AttackKind { Cuckoo, Tocttou };
enum class Tactic {
  // Relay the nonce to a benign enclave and present its fresh report.
  Launder,
  // Present a benign report captured in an earlier session.
  Replay,
  // Report from an enclave on the attacker's own platform.
  ForgeOwnPlatform,
  // Benign fresh report with the attacker's key swapped in.
  SubstituteKey,
  // Benign unbound report plus the attacker's channel key.
  LaunderUnbound,
  // Claim the identity of a benign edge registered ahead of time.
  ImpersonateRegistered,
};
enum class AttackOutcome { AttackDefeated, AttackSucceeded };
std::string_view to_string(AttackKind k);
std::string_view to_string(Tactic t);
std::string_view to_string(AttackOutcome o);

struct AttackConfig {
  AttackKind kind = AttackKind::Cuckoo;
  Protocol protocol = Protocol::Tlx;
  noise::Pattern pattern = noise::Pattern::XX;
  // Run against the strawman binding that the attack targets.
  bool strawman = false;
  Latencies latency;
  std::uint64_t seed = 1;
};

struct AttackResult {
  AttackOutcome outcome = AttackOutcome::AttackDefeated;
  Tactic tactic = Tactic::Launder;
  core::BindingMode binding = core::BindingMode::Spx;
  bool server_accepted_bind = false;
  std::string server_error;
  std::string attacker_error;
  PeerStatus client = PeerStatus::Running;
  bool attacker_recovered_key = false;
  std::vector<TraceEvent> trace;
};

AttackResult run_attack(const AttackConfig& cfg);

}  // namespace spx::net
