#include <gtest/gtest.h>

#include <algorithm>
#include <deque>

#include "spx/endpoints.hpp"
#include "spx/noise.hpp"
#include "spx/spx_core.hpp"
#include "spx/tlx.hpp"

using namespace spx;
using namespace spx::core;
using net::Port;
using wire::MsgType;

namespace {

GrantContext context(std::uint8_t tweak = 0) {
  GrantContext c;
  c.nonce.fill(0x11);
  c.edge_public.fill(0x22);
  c.server_public.fill(0x33);
  c.nonce[0] ^= tweak;
  return c;
}

TEST(Grant, SealedSizeMatchesConfiguration) {
  Key32 secret{};
  secret.fill(7);
  auto ctx = context();
  auto key = grant_key(secret, ctx);
  Bytes material(kGrantMaterialLen, 0xab);
  for (std::size_t size : {kNaturalGrantSize, std::size_t{66}, std::size_t{128}}) {
    auto ct = seal_grant(key, material, size, ctx);
    EXPECT_EQ(ct.size(), size);
    EXPECT_EQ(open_grant(key, ct, ctx), material);
  }
  EXPECT_EQ(kNaturalGrantSize, 48u);
  EXPECT_THROW(seal_grant(key, material, kNaturalGrantSize - 1, ctx), Error);
}

TEST(Grant, BoundToEveryContextField) {
  Key32 secret{};
  secret.fill(7);
  auto ctx = context();
  auto key = grant_key(secret, ctx);
  auto ct = seal_grant(key, Bytes(32, 1), kNaturalGrantSize, ctx);

  auto other_nonce = context(1);
  auto other_edge = ctx;
  other_edge.edge_public[5] ^= 1;
  auto other_server = ctx;
  other_server.server_public[9] ^= 1;
  for (const auto& c : {other_nonce, other_edge, other_server}) {
    EXPECT_NE(grant_key(secret, c), key);
    EXPECT_THROW(open_grant(key, ct, c), Error);
  }
  auto tampered = ct;
  tampered[3] ^= 0x80;
  EXPECT_THROW(open_grant(key, tampered, ctx), Error);
}

// Minimal deployment: platform, genuine enclave and server SPX config.
struct Deployment {
  crypto::Drbg rng{42};
  std::shared_ptr<see::Platform> platform = std::make_shared<see::Platform>(rng);
  tlx::Credentials creds = tlx::Credentials::generate(rng, "origin.example");
  crypto::KeyPair server_static = crypto::KeyPair::generate(rng);
  std::unique_ptr<see::Enclave> enclave;
  ServerSpxConfig spx;
  EdgeConfig edge;

  explicit Deployment(std::uint64_t enclave_seed = 5) {
    enclave = make_enclave(enclave_seed);
    spx.expected_edge_measurement = enclave->measurement();
    spx.trusted_platform = platform->public_key();
    spx.server_measurement = see::measure("test-server");
    spx.registry = std::make_shared<EdgeRegistry>();
    edge.server_pin = creds.key.public_key;
    edge.adapters = {tlx::adapter_factory(creds.key.public_key), noise::adapter_factory(server_static.public_key)};
  }
  std::unique_ptr<see::Enclave> make_enclave(std::uint64_t seed) const {
    see::EnclaveConfig ec;
    ec.seed = seed;
    return std::make_unique<see::Enclave>(platform, ec);
  }
};

TEST(ServerBinding, RespondsWithReportOrNothing) {
  Deployment s;
  crypto::Drbg r(1);
  ServerBinding b(s.spx, s.creds.key, r);
  auto report = b.respond();
  EXPECT_EQ(report.size(), see::kReportSize);
  auto parsed = see::AttestationReport::parse(report);
  EXPECT_EQ(parsed.ephemeral_public, b.server_public());
  EXPECT_TRUE(see::verify_report(parsed, s.spx.server_measurement, b.nonce(), s.creds.key.public_key));

  auto off = s.spx;
  off.capable = false;
  ServerBinding nb(off, s.creds.key, r);
  EXPECT_TRUE(nb.respond().empty());
}

TEST(ServerBinding, AcceptsGenuineEnclaveAndGrants) {
  Deployment s;
  crypto::Drbg r(1);
  ServerBinding b(s.spx, s.creds.key, r);
  b.respond();
  EnclaveBinder binder(*s.enclave);
  b.accept_bind(binder.make_bind(b.nonce(), b.server_public()));
  EXPECT_TRUE(b.bound());
  EXPECT_EQ(b.edge_public(), binder.bound_public());
  Bytes material(32, 0x5c);
  auto grant = b.make_grant(material);
  EXPECT_TRUE(grant.spx_internal());
  EXPECT_EQ(grant.payload.size(), kNaturalGrantSize);
  EXPECT_EQ(binder.open_grant(grant.payload), material);
  binder.finish();
  EXPECT_FALSE(binder.holds_ephemeral());
}

TEST(ServerBinding, RejectsStaleNonceWrongMeasurementAndStrawmanFrames) {
  Deployment s;
  crypto::Drbg r(1);
  ServerBinding first(s.spx, s.creds.key, r);
  first.respond();
  ServerBinding second(s.spx, s.creds.key, r);
  second.respond();
  EnclaveBinder binder(*s.enclave);
  auto bind = binder.make_bind(first.nonce(), first.server_public());
  auto expect_invalid = [](auto fn) {
    try {
      fn();
      ADD_FAILURE() << "accepted";
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::AttestationInvalid);
    }
  };
  expect_invalid([&] { second.accept_bind(bind); });

  see::EnclaveConfig ec;
  ec.manifest = "some-other-edge";
  see::Enclave rogue(s.platform, ec);
  EnclaveBinder rb(rogue);
  ServerBinding third(s.spx, s.creds.key, r);
  third.respond();
  expect_invalid([&] { third.accept_bind(rb.make_bind(third.nonce(), third.server_public())); });

  ServerBinding fourth(s.spx, s.creds.key, r);
  fourth.respond();
  crypto::Drbg sr(3);
  StrawmanBinder straw(*s.enclave, BindingMode::AttestAfterConnect, "edge-1", sr);
  expect_invalid([&] { fourth.accept_bind(straw.make_bind(fourth.nonce(), fourth.server_public())); });
}

TEST(ServerBinding, StrawmanModesAcceptTheirOwnFrames) {
  Deployment s;
  crypto::Drbg r(1), sr(3);
  auto after = s.spx;
  after.mode = BindingMode::AttestAfterConnect;
  ServerBinding a(after, s.creds.key, r);
  a.respond();
  StrawmanBinder sa(*s.enclave, BindingMode::AttestAfterConnect, "edge-1", sr);
  a.accept_bind(sa.make_bind(a.nonce(), a.server_public()));
  EXPECT_TRUE(a.bound());
  Bytes m(32, 9);
  EXPECT_EQ(sa.open_grant(a.make_grant(m).payload), m);

  auto before = s.spx;
  before.mode = BindingMode::AttestBeforeConnect;
  ServerBinding unregistered(before, s.creds.key, r);
  unregistered.respond();
  StrawmanBinder sb(*s.enclave, BindingMode::AttestBeforeConnect, "edge-1", sr);
  EXPECT_THROW(unregistered.accept_bind(sb.make_bind(unregistered.nonce(), unregistered.server_public())), Error);

  see::AttestNonce n{};
  n.fill(4);
  ASSERT_TRUE(register_edge(before, "edge-1", s.enclave->attest_unbound(n), n));
  ServerBinding b(before, s.creds.key, r);
  b.respond();
  b.accept_bind(sb.make_bind(b.nonce(), b.server_public()));
  EXPECT_TRUE(b.bound());
}

TEST(Extensions, EmbedAndStripRoundTrip) {
  auto hello = wire::make(MsgType::Prologue, noise::prologue_encode(noise::Pattern::XX));
  auto off = *extension_offset_for(hello);
  auto req = embed_request(hello, off);
  EXPECT_EQ(req.payload.size(), hello.payload.size() + 3);
  EXPECT_EQ(spx_payload_bytes(req), 0u);
  EXPECT_EQ(spx_framing_bytes(req), 3u);
  auto back = strip_extensions(req, off);
  EXPECT_TRUE(back.had_request);
  EXPECT_FALSE(back.response);
  EXPECT_EQ(back.msg.payload, hello.payload);

  EXPECT_FALSE(extension_offset_for(wire::make(MsgType::NoiseHandshake, Bytes(32))));
  auto grant = wire::make(MsgType::SpxGrant, Bytes(48), wire::kFlagSpxInternal);
  EXPECT_EQ(spx_payload_bytes(grant), 48u);
  EXPECT_EQ(spx_framing_bytes(grant), wire::kHeaderLen);
}

// ---------------------------------------------------------------------------
// Edge phase machine under reordered input

struct Input {
  Port port;
  wire::WireMessage msg;
};

class RecordingIo : public net::Io {
 public:
  void send(Port p, wire::WireMessage m) override { out.push_back({p, std::move(m)}); }
  void forward(Port p, wire::WireMessage m, net::FlightTag) override { send(p, std::move(m)); }
  std::vector<Input> out;
};

std::unique_ptr<net::SpxEdgePeer> make_edge(Deployment& s, see::Enclave& enclave) {
  return std::make_unique<net::SpxEdgePeer>(s.edge, std::make_unique<EnclaveBinder>(enclave), &enclave, 1, "conn-1");
}

// Honest NoiXe run through an SPX edge; returns every frame the edge received.
std::vector<Input> honest_edge_inputs(Deployment& s, noise::Pattern p) {
  noise::InitiatorConfig ic;
  ic.pattern = p;
  crypto::Drbg krng(77);
  if (noise::initiator_needs_static(p)) ic.s = crypto::KeyPair::generate(krng);
  if (noise::pattern_def(p).responder_static_pre) ic.responder_static = s.server_static.public_key;
  ic.seed = 8;
  noise::InitiatorCore client(ic);
  noise::ResponderCore server({s.server_static, &s.creds.key, &s.spx, 9});
  auto enclave = s.make_enclave(5);
  auto edge = make_edge(s, *enclave);

  std::vector<Input> inputs;
  std::deque<Input> to_edge;
  for (auto& m : client.start()) to_edge.push_back({Port::Down, m});
  while (!to_edge.empty()) {
    auto in = to_edge.front();
    to_edge.pop_front();
    inputs.push_back(in);
    RecordingIo io;
    edge->receive(in.port, {in.msg, {}}, io);
    for (auto& o : io.out) {
      auto replies = o.port == Port::Up ? server.on_message(o.msg) : client.on_message(o.msg);
      for (auto& r : replies) to_edge.push_back({o.port, r});
    }
  }
  EXPECT_EQ(edge->state().phase(), Phase::Established);
  EXPECT_TRUE(client.complete());
  EXPECT_TRUE(server.granted());
  return inputs;
}

int rank(Phase p) {
  switch (p) {
    case Phase::Idle: return 0;
    case Phase::Detected: return 1;
    case Phase::Relaying: return 2;
    case Phase::Bound: return 3;
    case Phase::Granted: return 4;
    case Phase::Established: return 5;
    case Phase::Aborted: return 6;
  }
  return -1;
}

class EdgePermutations : public ::testing::TestWithParam<std::pair<noise::Pattern, std::size_t>> {};

TEST_P(EdgePermutations, OnlyCausalOrdersEstablish) {
  auto [pattern, expected_inputs] = GetParam();
  Deployment s;
  auto inputs = honest_edge_inputs(s, pattern);
  ASSERT_EQ(inputs.size(), expected_inputs);

  std::vector<std::size_t> order(inputs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::size_t established = 0, admissible = 0, permutations = 0;
  do {
    ++permutations;
    auto enclave = s.make_enclave(5);
    auto edge = make_edge(s, *enclave);
    for (auto i : order) {
      RecordingIo io;
      edge->receive(inputs[i].port, {inputs[i].msg, {}}, io);
      if (edge->status() == net::PeerStatus::Aborted) break;
    }
    const auto& h = edge->state().history();
    for (std::size_t k = 1; k < h.size(); ++k) {
      EXPECT_LT(rank(h[k - 1]), rank(h[k])) << "phase went backwards";
      if (h[k] != Phase::Aborted) EXPECT_EQ(rank(h[k]), rank(h[k - 1]) + 1) << "phase skipped";
    }
    // The grant may move within its server flight but never ahead of a
    // client message; everything else keeps the honest order.
    std::vector<std::size_t> rest;
    std::size_t grant_at = 0, last_client = 0;
    for (std::size_t k = 0; k < order.size(); ++k) {
      if (inputs[order[k]].msg.type == MsgType::SpxGrant) {
        grant_at = k;
      } else {
        rest.push_back(order[k]);
      }
      if (inputs[order[k]].port == Port::Down) last_client = k;
    }
    bool honest = std::is_sorted(rest.begin(), rest.end()) && grant_at > last_client;
    if (honest) ++admissible;
    if (edge->state().phase() == Phase::Established) {
      ++established;
      EXPECT_TRUE(honest) << [&] {
        std::string d;
        for (auto i : order) d += std::string(inputs[i].port == Port::Up ? "S:" : "C:") + std::string(wire::name(inputs[i].msg.type)) + " ";
        return d;
      }();
    } else {
      EXPECT_FALSE(honest);
    }
  } while (std::next_permutation(order.begin(), order.end()));
  EXPECT_EQ(established, admissible);
  EXPECT_GE(admissible, 1u);
  std::size_t fact = 1;
  for (std::size_t i = 2; i <= expected_inputs; ++i) fact *= i;
  EXPECT_EQ(permutations, fact);
}

INSTANTIATE_TEST_SUITE_P(NoiXe, EdgePermutations,
                         ::testing::Values(std::pair{noise::Pattern::NK, std::size_t{5}},
                                           std::pair{noise::Pattern::XX, std::size_t{6}}),
                         [](const auto& info) { return std::string(noise::pattern_name(info.param.first)); });

TEST(EdgeState, NonSpxFirstMessagePassesThrough) {
  Deployment s;
  auto enclave = s.make_enclave(5);
  auto edge = make_edge(s, *enclave);
  RecordingIo io;
  edge->receive(Port::Down, {wire::make(MsgType::ApplicationData, Bytes(10)), {}}, io);
  EXPECT_TRUE(edge->state().pass_through());
  ASSERT_EQ(io.out.size(), 1u);
  EXPECT_EQ(io.out[0].port, Port::Up);
}

TEST(EdgeState, ResumeIsUnsupported) {
  Deployment s;
  SpxEdgeState st(s.edge, std::make_unique<EnclaveBinder>(*s.enclave), s.enclave.get(), 1, "x");
  EXPECT_EQ(st.resume(Bytes(10)), ResumeResult::Unsupported);
}

}  // namespace
