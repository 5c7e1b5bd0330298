#pragma once

// Keys, enclave and configuration shared by one simulated or loopback
// deployment.

#include "spx/scenario.hpp"

namespace spx::net::detail {

using core::BindingMode;

struct World {
  crypto::Drbg rng;
  std::shared_ptr<see::Platform> platform;
  std::unique_ptr<see::Enclave> enclave;
  tlx::Credentials credentials;
  crypto::KeyPair server_static;
  crypto::KeyPair edge_static;
  core::ServerSpxConfig spx;
  core::EdgeConfig edge;

  World(std::uint64_t seed, std::size_t cert_size, std::size_t enclave_cap)
      : rng(seed),
        platform(std::make_shared<see::Platform>(rng)),
        credentials(tlx::Credentials::generate(rng, "origin.example", cert_size)),
        server_static(crypto::KeyPair::generate(rng)),
        edge_static(crypto::KeyPair::generate(rng)) {
    see::EnclaveConfig ec;
    ec.seed = rng.next_u64();
    ec.memory_cap_bytes = enclave_cap;
    enclave = std::make_unique<see::Enclave>(platform, ec);
    spx.expected_edge_measurement = enclave->measurement();
    spx.trusted_platform = platform->public_key();
    spx.server_measurement = see::measure("spx-origin-server/v1");
    spx.registry = std::make_shared<core::EdgeRegistry>();
    edge.server_pin = credentials.key.public_key;
    edge.adapters = {tlx::adapter_factory(credentials.key.public_key),
                     noise::adapter_factory(server_static.public_key)};
  }

  // Attest-before-connect registration of a benign edge.
  void preregister(const std::string& identity) {
    see::AttestNonce nonce{};
    rng.fill(nonce);
    if (!core::register_edge(spx, identity, enclave->attest_unbound(nonce), nonce)) {
      throw Error(ErrorCode::AttestationInvalid, "edge registration rejected");
    }
  }

  std::optional<Key32> pre_static(noise::Pattern p) const {
    if (noise::pattern_def(p).responder_static_pre) return server_static.public_key;
    return std::nullopt;
  }

  std::unique_ptr<ClientPeer> make_client(Protocol proto, noise::Pattern p, const Workload& w,
                                          std::uint64_t seed, TlxClientPeer** tc, NoiseClientPeer** nc) {
    if (proto == Protocol::Tlx) {
      auto c = std::make_unique<TlxClientPeer>(tlx::ClientConfig{credentials.key.public_key, seed}, w);
      *tc = c.get();
      return c;
    }
    crypto::Drbg krng(seed ^ 0x5a5a5a5aULL);
    noise::InitiatorConfig ic;
    ic.pattern = p;
    if (noise::initiator_needs_static(p)) ic.s = crypto::KeyPair::generate(krng);
    ic.responder_static = pre_static(p);
    ic.seed = seed;
    auto c = std::make_unique<NoiseClientPeer>(std::move(ic), w);
    *nc = c.get();
    return c;
  }

  std::unique_ptr<ServerPeer> make_server(Protocol proto, std::uint64_t seed, TlxServerPeer** ts,
                                          NoiseServerPeer** ns) {
    if (proto == Protocol::Tlx) {
      auto s = std::make_unique<TlxServerPeer>(tlx::ServerConfig{&credentials, &spx, seed});
      *ts = s.get();
      return s;
    }
    auto s = std::make_unique<NoiseServerPeer>(noise::ResponderConfig{server_static, &credentials.key, &spx, seed});
    *ns = s.get();
    return s;
  }

  std::unique_ptr<Peer> make_split(Protocol proto, noise::Pattern p, std::uint64_t seed) {
    if (proto == Protocol::Tlx) {
      return std::make_unique<TlxSplitEdgePeer>(tlx::ServerConfig{&credentials, nullptr, seed},
                                                tlx::ClientConfig{credentials.key.public_key, seed + 1});
    }
    noise::InitiatorConfig up;
    up.pattern = p;
    if (noise::initiator_needs_static(p)) up.s = edge_static;
    up.responder_static = pre_static(p);
    up.seed = seed + 1;
    return std::make_unique<NoiseSplitEdgePeer>(noise::ResponderConfig{server_static, nullptr, nullptr, seed},
                                                std::move(up));
  }
};

}  // namespace spx::net::detail
