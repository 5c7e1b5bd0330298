#include "spx/scenario.hpp"

#include "deployment.hpp"

#include <algorithm>
#include <functional>
#include <ostream>
#include <set>

namespace spx::net {

using core::BindingMode;
using wire::WireMessage;

std::string_view to_string(Protocol p) { return p == Protocol::Tlx ? "TLX" : "NoiXe"; }

std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::E2E: return "E2E";
    case Mode::Split: return "Split";
    case Mode::Spx: return "SPX";
  }
  return "?";
}

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

}  // namespace

Protocol parse_protocol(std::string_view s) {
  auto l = lower(s);
  if (l == "tlx" || l == "tls") return Protocol::Tlx;
  if (l == "noixe" || l == "noise") return Protocol::NoiXe;
  throw Error(ErrorCode::Config, "unknown protocol '" + std::string(s) + "'");
}

Mode parse_mode(std::string_view s) {
  auto l = lower(s);
  if (l == "e2e") return Mode::E2E;
  if (l == "split") return Mode::Split;
  if (l == "spx") return Mode::Spx;
  throw Error(ErrorCode::Config, "unknown mode '" + std::string(s) + "'");
}

bool ConnectionResult::keys_agree() const {
  if (!client_key || !server_key || *client_key != *server_key) return false;
  if (edge && (!edge_key || *edge_key != *client_key)) return false;
  if (client_reverse_key || server_reverse_key) {
    if (!client_reverse_key || !server_reverse_key || *client_reverse_key != *server_reverse_key) return false;
    if (edge && (!edge_reverse_key || *edge_reverse_key != *client_reverse_key)) return false;
  }
  return true;
}

bool ScenarioResult::all_success() const {
  return !run.deadlock && std::all_of(connections.begin(), connections.end(), [](const auto& c) { return c.success(); });
}

LinkAccount ScenarioResult::link(std::string_view label) const {
  auto it = links.find(label);
  return it == links.end() ? LinkAccount{} : it->second;
}

LinkAccount ScenarioResult::server_link() const {
  return links.contains(kLinkEdgeServer) ? link(kLinkEdgeServer) : link(kLinkClientServer);
}

double ScenarioResult::mean_handshake_ns() const {
  double sum = 0;
  std::size_t n = 0;
  for (const auto& c : connections) {
    if (c.handshake_ns) {
      sum += static_cast<double>(*c.handshake_ns);
      ++n;
    }
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

std::uint64_t ScenarioResult::max_done_ns() const {
  std::uint64_t m = 0;
  for (const auto& c : connections) m = std::max(m, c.done_ns.value_or(0));
  return m;
}

void ScenarioResult::write_jsonl(std::ostream& out) const {
  for (const auto& e : trace) out << trace_event_json(e) << '\n';
}

LinkAccount account(const std::vector<TraceEvent>& trace, std::string_view label) {
  LinkAccount a;
  std::set<std::pair<std::uint32_t, FlightTag>> flights;
  for (const auto& e : trace) {
    if (e.link != label) continue;
    ++a.frames;
    a.bytes += e.bytes;
    a.spx_payload += e.spx_payload;
    a.spx_framing += e.spx_framing;
    flights.insert({e.conn, e.flight});
  }
  a.flights = flights.size();
  return a;
}

Overhead overhead(const ScenarioResult& spx, const ScenarioResult& split) {
  auto s = spx.server_link();
  auto b = split.server_link();
  Overhead o;
  o.extra_flights = static_cast<long>(s.flights) - static_cast<long>(b.flights);
  o.extra_bytes = static_cast<long>(s.bytes) - static_cast<long>(b.bytes);
  o.spx_payload = s.spx_payload;
  o.spx_framing = s.spx_framing;
  return o;
}

bool trace_contains(const std::vector<TraceEvent>& trace, ByteView secret) {
  if (secret.empty()) return false;
  for (const auto& e : trace) {
    const auto& p = e.msg.payload;
    if (std::search(p.begin(), p.end(), secret.begin(), secret.end()) != p.end()) return true;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Deployment

namespace {

using detail::World;

struct ConnNodes {
  NodeId client = 0;
  NodeId server = 0;
  std::optional<NodeId> edge;
  ClientPeer* cp = nullptr;
  ServerPeer* sp = nullptr;
  TlxClientPeer* tc = nullptr;
  NoiseClientPeer* nc = nullptr;
  TlxServerPeer* ts = nullptr;
  NoiseServerPeer* ns = nullptr;
  SpxEdgePeer* spx = nullptr;
  Peer* split = nullptr;
};

std::optional<Key32> key_of(const std::optional<crypto::SymmetricKey>& k) {
  if (!k) return std::nullopt;
  return k->bytes;
}

ConnectionResult collect(const Simulator& sim, const ConnNodes& n) {
  ConnectionResult r;
  r.client = n.cp->status();
  r.client_error = n.cp->error();
  r.server = n.sp->status();
  r.server_error = n.sp->error();
  r.handshake_ns = sim.handshake_ns(n.client);
  r.done_ns = sim.finished_ns(n.client);
  r.observed = n.cp->observed();
  r.bytes_echoed = n.cp->bytes_echoed();
  r.client_complete = n.cp->handshake_complete();
  r.server_complete = n.sp->handshake_complete();
  if (n.tc && r.client_complete) r.client_key = n.tc->core().session_key().bytes;
  if (n.ts && r.server_complete) r.server_key = n.ts->core().session_key().bytes;
  if (n.nc && r.client_complete) {
    r.client_key = key_of(n.nc->core().send_state().key());
    r.client_reverse_key = key_of(n.nc->core().recv_state().key());
  }
  if (n.ns && r.server_complete) {
    r.server_key = key_of(n.ns->core().recv_state().key());
    r.server_reverse_key = key_of(n.ns->core().send_state().key());
  }
  if (n.spx) {
    r.edge = n.spx->status();
    r.edge_error = n.spx->error();
    r.edge_phases = n.spx->state().history();
    r.spx_established = n.spx->handshake_complete();
    if (const auto& s = n.spx->session()) {
      r.edge_key = s->session_key.bytes;
      if (s->reverse_key) r.edge_reverse_key = s->reverse_key->bytes;
    }
  } else if (n.split) {
    r.edge = n.split->status();
    r.edge_error = n.split->error();
  }
  return r;
}

}  // namespace

ScenarioResult run_scenario(const ScenarioConfig& cfg) {
  if (cfg.clients == 0) throw Error(ErrorCode::Config, "at least one client");
  World world(cfg.seed, cfg.cert_size, cfg.enclave_cap_bytes);
  world.spx.capable = cfg.server_spx_capable;
  world.spx.mode = cfg.binding;
  world.spx.grant_size = cfg.grant_size;
  if (cfg.mode == Mode::Spx && cfg.binding == BindingMode::AttestBeforeConnect) world.preregister("edge-1");

  ScenarioResult result;
  std::vector<ConnNodes> conns(cfg.clients);
  {
    Simulator sim(cfg.cost, cfg.trace_payloads);
    auto edge_host = sim.add_host("edge");
    auto server_host = sim.add_host("server");
    for (std::size_t i = 0; i < cfg.clients; ++i) {
      auto& n = conns[i];
      auto id = std::to_string(i);
      auto conn = static_cast<std::uint32_t>(i);
      Workload w = cfg.workloads.empty() ? Workload{} : cfg.workloads[i % cfg.workloads.size()];
      auto client_seed = world.rng.next_u64();
      auto server_seed = world.rng.next_u64();
      auto edge_seed = world.rng.next_u64();

      auto client = world.make_client(cfg.protocol, cfg.pattern, w, client_seed, &n.tc, &n.nc);
      n.cp = client.get();
      auto host = sim.add_host("client-" + id);
      n.client = sim.add_node("client-" + id, host, std::move(client), true, i * cfg.client_stagger_ns);

      auto server = world.make_server(cfg.protocol, server_seed, &n.ts, &n.ns);
      n.sp = server.get();
      n.server = sim.add_node("server-" + id, server_host, std::move(server));

      if (cfg.mode == Mode::E2E) {
        sim.connect(n.client, Port::Up, n.server, Port::Down, cfg.latency.client_server_ns,
                    std::string(kLinkClientServer), conn);
        continue;
      }
      std::unique_ptr<Peer> edge;
      if (cfg.mode == Mode::Split) {
        edge = world.make_split(cfg.protocol, cfg.pattern, edge_seed);
        n.split = edge.get();
      } else {
        std::unique_ptr<core::Binder> binder;
        if (cfg.binding == BindingMode::Spx) {
          binder = std::make_unique<core::EnclaveBinder>(*world.enclave);
        } else {
          binder = std::make_unique<core::StrawmanBinder>(*world.enclave, cfg.binding, "edge-1", world.rng);
        }
        auto e = std::make_unique<SpxEdgePeer>(world.edge, std::move(binder), world.enclave.get(), i, "conn-" + id);
        n.spx = e.get();
        edge = std::move(e);
      }
      n.edge = sim.add_node("edge-" + id, edge_host, std::move(edge));
      sim.connect(n.client, Port::Up, *n.edge, Port::Down, cfg.latency.client_edge_ns,
                  std::string(kLinkClientEdge), conn);
      sim.connect(*n.edge, Port::Up, n.server, Port::Down, cfg.latency.edge_server_ns,
                  std::string(kLinkEdgeServer), conn);
    }

    result.run = sim.run();
    for (const auto& n : conns) result.connections.push_back(collect(sim, n));
    result.trace = sim.trace();
    result.activations = sim.activations();
    for (NodeId i = 0; i < sim.node_count(); ++i) result.node_names.push_back(sim.name(i));
  }
  for (auto label : {kLinkClientEdge, kLinkEdgeServer, kLinkClientServer}) {
    auto a = account(result.trace, label);
    if (a.frames) result.links.emplace(std::string(label), a);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Adversaries

std::string_view to_string(AttackKind k) { return k == AttackKind::Cuckoo ? "cuckoo" : "tocttou"; }

std::string_view to_string(Tactic t) {
  switch (t) {
    case Tactic::Launder: return "launder";
    case Tactic::Replay: return "replay";
    case Tactic::ForgeOwnPlatform: return "forge-own-platform";
    case Tactic::SubstituteKey: return "substitute-key";
    case Tactic::LaunderUnbound: return "launder-unbound";
    case Tactic::ImpersonateRegistered: return "impersonate-registered";
  }
  return "?";
}

std::string_view to_string(AttackOutcome o) {
  return o == AttackOutcome::AttackDefeated ? "AttackDefeated" : "AttackSucceeded";
}

namespace {

struct AttackLog {
  std::optional<Bytes> recovered;
  std::string error;
};

// Binder of a malicious edge that has no enclave of its own on the
// trusted platform, only host access to a benign enclave's ECALLs.
class AttackerBinder : public core::Binder {
 public:
  AttackerBinder(Tactic tactic, see::EcallSurface benign, see::Enclave* own, std::optional<see::AttestationReport> stale,
                 std::string identity, crypto::Drbg& rng, std::shared_ptr<AttackLog> log)
      : tactic_(tactic),
        benign_(benign),
        own_(own),
        stale_(std::move(stale)),
        identity_(std::move(identity)),
        channel_(crypto::KeyPair::generate(rng)),
        log_(std::move(log)) {}

  WireMessage make_bind(const see::AttestNonce& nonce, const Key32& server_public) override {
    Bytes payload;
    Key32 claimed = channel_.public_key;
    switch (tactic_) {
      case Tactic::Launder: {
        auto eph = benign_.mint_ephemeral();
        payload = benign_.attest(eph, nonce).serialize();
        claimed = eph;
        break;
      }
      case Tactic::Replay:
        payload = stale_->serialize();
        claimed = stale_->ephemeral_public;
        break;
      case Tactic::ForgeOwnPlatform: {
        claimed = own_->mint_ephemeral();
        payload = own_->attest(claimed, nonce).serialize();
        break;
      }
      case Tactic::SubstituteKey: {
        auto report = benign_.attest(benign_.mint_ephemeral(), nonce);
        report.ephemeral_public = channel_.public_key;
        payload = report.serialize();
        break;
      }
      case Tactic::LaunderUnbound:
        payload = core::bind_payload_after_connect(benign_.attest_unbound(nonce), channel_.public_key);
        break;
      case Tactic::ImpersonateRegistered:
        payload = core::bind_payload_before_connect(identity_, channel_.public_key);
        break;
    }
    ctx_ = {nonce, claimed, server_public};
    return wire::make(wire::MsgType::SpxAttestation, std::move(payload), wire::kFlagSpxInternal);
  }

  Bytes open_grant(ByteView grant_payload) override {
    try {
      Key32 secret = tactic_ == Tactic::ForgeOwnPlatform ? own_->ephemeral_dh(ctx_.edge_public, ctx_.server_public)
                                                          : crypto::dh(channel_, ctx_.server_public);
      auto material = core::open_grant(core::grant_key(secret, ctx_), grant_payload, ctx_);
      log_->recovered = material;
      return material;
    } catch (const Error& e) {
      log_->error = e.what();
      throw;
    }
  }

  Key32 bound_public() const override { return ctx_.edge_public; }

 private:
  Tactic tactic_;
  see::EcallSurface benign_;
  see::Enclave* own_;
  std::optional<see::AttestationReport> stale_;
  std::string identity_;
  crypto::KeyPair channel_;
  core::GrantContext ctx_;
  std::shared_ptr<AttackLog> log_;
};

Tactic pick_tactic(const AttackConfig& cfg, crypto::Drbg& rng) {
  if (cfg.strawman) return cfg.kind == AttackKind::Cuckoo ? Tactic::LaunderUnbound : Tactic::ImpersonateRegistered;
  if (cfg.kind == AttackKind::Cuckoo) {
    static constexpr Tactic kCuckoo[] = {Tactic::Launder, Tactic::ForgeOwnPlatform};
    return kCuckoo[rng.next_u64() % std::size(kCuckoo)];
  }
  static constexpr Tactic kTocttou[] = {Tactic::Replay, Tactic::SubstituteKey, Tactic::Launder};
  return kTocttou[rng.next_u64() % std::size(kTocttou)];
}

}  // namespace

AttackResult run_attack(const AttackConfig& cfg) {
  World world(cfg.seed, tlx::kDefaultCertSize, see::kUnlimited);
  AttackResult result;
  result.binding = !cfg.strawman                      ? BindingMode::Spx
                   : cfg.kind == AttackKind::Cuckoo ? BindingMode::AttestAfterConnect
                                                     : BindingMode::AttestBeforeConnect;
  world.spx.mode = result.binding;
  if (result.binding == BindingMode::AttestBeforeConnect) world.preregister("edge-benign");
  result.tactic = pick_tactic(cfg, world.rng);

  // A report the benign enclave produced for an earlier session.
  see::AttestNonce old_nonce{};
  world.rng.fill(old_nonce);
  auto stale = world.enclave->attest(world.enclave->mint_ephemeral(), old_nonce);

  crypto::Drbg attacker_rng(world.rng.next_u64());
  see::EnclaveConfig own_cfg;
  own_cfg.seed = attacker_rng.next_u64();
  see::Enclave own(std::make_shared<see::Platform>(attacker_rng), own_cfg);

  auto log = std::make_shared<AttackLog>();
  ConnNodes n;
  Simulator sim;
  auto client = world.make_client(cfg.protocol, cfg.pattern, Workload{1024, 0, 16, cfg.seed}, world.rng.next_u64(),
                                  &n.tc, &n.nc);
  n.cp = client.get();
  n.client = sim.add_node("client", sim.add_host("client"), std::move(client), true);
  auto server = world.make_server(cfg.protocol, world.rng.next_u64(), &n.ts, &n.ns);
  n.sp = server.get();
  n.server = sim.add_node("server", sim.add_host("server"), std::move(server));
  auto binder = std::make_unique<AttackerBinder>(result.tactic, see::EcallSurface(*world.enclave), &own, stale,
                                                 "edge-benign", attacker_rng, log);
  auto edge = std::make_unique<SpxEdgePeer>(world.edge, std::move(binder), nullptr, 0, "attack");
  n.spx = edge.get();
  n.edge = sim.add_node("attacker-edge", sim.add_host("attacker"), std::move(edge));
  sim.connect(n.client, Port::Up, *n.edge, Port::Down, cfg.latency.client_edge_ns, std::string(kLinkClientEdge));
  sim.connect(*n.edge, Port::Up, n.server, Port::Down, cfg.latency.edge_server_ns, std::string(kLinkEdgeServer));
  sim.run();

  const core::ServerBinding* binding = n.ts ? n.ts->core().binding() : n.ns->core().binding();
  result.server_accepted_bind = binding && binding->bound();
  result.server_error = n.sp->error();
  result.attacker_error = log->error.empty() ? n.spx->error() : log->error;
  result.client = n.cp->status();

  Bytes server_material;
  if (n.ts && n.ts->core().granted()) {
    server_material = to_bytes(n.ts->core().session_key().bytes);
  } else if (n.ns && n.ns->core().granted()) {
    server_material = to_bytes(n.ns->core().final_ck());
  }
  result.attacker_recovered_key = log->recovered && !server_material.empty() && *log->recovered == server_material;
  result.outcome = result.attacker_recovered_key ? AttackOutcome::AttackSucceeded : AttackOutcome::AttackDefeated;
  result.trace = sim.trace();
  return result;
}

}  // namespace spx::net
