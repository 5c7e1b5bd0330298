#include <gtest/gtest.h>

#include <sstream>

#include "json.hpp"
#include "spx/netsim.hpp"
#include "spx/scenario.hpp"

using namespace spx;
using namespace spx::net;
using wire::MsgType;

namespace {

CostModel round_costs() {
  CostModel c{};
  c.activation_ns = 1000;
  c.keygen_ns = 0;
  c.dh_ns = 100;
  c.sign_ns = 0;
  c.verify_ns = 0;
  c.aead_call_ns = 0;
  c.aead_kb_ns = 0;
  c.hash_call_ns = 10;
  return c;
}

wire::WireMessage data(std::uint8_t tag) { return wire::make(MsgType::ApplicationData, Bytes{tag}); }

// Sends a ping per round, hashing once per activation.
class Pinger : public Peer {
 public:
  explicit Pinger(int rounds) : rounds_(rounds) {}
  void start(Io& io) override {
    crypto::hash(Bytes{1});
    io.send(Port::Up, data(0));
  }
  void receive(Port, const Frame&, Io& io) override {
    crypto::hash(Bytes{1});
    if (++got_ == rounds_) {
      done_ = true;
      return;
    }
    io.send(Port::Up, data(static_cast<std::uint8_t>(got_)));
  }
  PeerStatus status() const override { return done_ ? PeerStatus::Done : PeerStatus::Running; }
  bool handshake_complete() const override { return got_ > 0; }

 private:
  int rounds_;
  int got_ = 0;
  bool done_ = false;
};

// Echoes every frame after one DH.
class Ponger : public Peer {
 public:
  Ponger() {
    crypto::Drbg r(1);
    kp_ = crypto::KeyPair::generate(r);
    other_ = crypto::KeyPair::generate(r).public_key;
  }
  void receive(Port from, const Frame& f, Io& io) override {
    crypto::dh(kp_, other_);
    io.send(from, f.msg);
  }
  PeerStatus status() const override { return PeerStatus::Running; }
  bool handshake_complete() const override { return false; }

 private:
  crypto::KeyPair kp_;
  Key32 other_{};
};

TEST(Simulator, PingPongTimeIsActivationCostsPlusLatency) {
  for (std::uint64_t latency : {0ull, 5000ull}) {
    const int rounds = 4;
    Simulator sim(round_costs());
    auto hc = sim.add_host("c");
    auto hs = sim.add_host("s");
    auto c = sim.add_node("client", hc, std::make_unique<Pinger>(rounds), true);
    auto s = sim.add_node("server", hs, std::make_unique<Ponger>());
    sim.connect(c, Port::Up, s, Port::Down, latency, "l");
    auto st = sim.run();
    EXPECT_FALSE(st.deadlock);
    const std::uint64_t client_act = 1000 + 10, server_act = 1000 + 100;
    // Server start activation runs at 0 on its own host and does not delay.
    std::uint64_t want = client_act + rounds * (2 * latency + server_act + client_act);
    EXPECT_EQ(sim.finished_ns(c), want) << "latency " << latency;
    EXPECT_EQ(sim.handshake_ns(c), client_act + 2 * latency + server_act + client_act);
    EXPECT_EQ(sim.trace().size(), 2u * rounds);
  }
}

TEST(Simulator, HostRunsOneActivationAtATime) {
  Simulator sim(round_costs());
  auto h = sim.add_host("shared");
  auto hs = sim.add_host("s");
  auto a = sim.add_node("a", h, std::make_unique<Pinger>(1), true);
  auto b = sim.add_node("b", h, std::make_unique<Pinger>(1), true);
  auto s1 = sim.add_node("s1", hs, std::make_unique<Ponger>());
  auto s2 = sim.add_node("s2", sim.add_host("s2"), std::make_unique<Ponger>());
  sim.connect(a, Port::Up, s1, Port::Down, 0, "l1");
  sim.connect(b, Port::Up, s2, Port::Down, 0, "l2");
  sim.run();
  std::vector<std::pair<std::uint64_t, std::uint64_t>> on_shared;
  for (const auto& r : sim.activations()) {
    if (r.node == a || r.node == b) on_shared.push_back({r.start_ns, r.end_ns});
  }
  std::sort(on_shared.begin(), on_shared.end());
  ASSERT_EQ(on_shared.size(), 4u);
  for (std::size_t i = 1; i < on_shared.size(); ++i) EXPECT_GE(on_shared[i].first, on_shared[i - 1].second);
  EXPECT_EQ(on_shared[1].first, 1010u);
}

class Burst : public Peer {
 public:
  void start(Io& io) override {
    for (std::uint8_t i = 0; i < 5; ++i) io.send(Port::Up, data(i));
  }
  void receive(Port, const Frame&, Io&) override {}
  PeerStatus status() const override { return PeerStatus::Running; }
  bool handshake_complete() const override { return false; }
};

class Sink : public Peer {
 public:
  explicit Sink(std::vector<std::uint8_t>* seen) : seen_(seen) {}
  void receive(Port, const Frame& f, Io&) override { seen_->push_back(f.msg.payload.at(0)); }
  PeerStatus status() const override { return PeerStatus::Running; }
  bool handshake_complete() const override { return false; }

 private:
  std::vector<std::uint8_t>* seen_;
};

TEST(Simulator, LinksAreFifoAndDeadlockIsReported) {
  std::vector<std::uint8_t> seen;
  Simulator sim(round_costs());
  auto b = sim.add_node("burst", sim.add_host("b"), std::make_unique<Burst>(), true);
  auto s = sim.add_node("sink", sim.add_host("s"), std::make_unique<Sink>(&seen));
  sim.connect(b, Port::Up, s, Port::Down, 100, "l");
  auto st = sim.run();
  EXPECT_EQ(seen, (std::vector<std::uint8_t>{0, 1, 2, 3, 4}));
  EXPECT_TRUE(st.deadlock);
  EXPECT_EQ(st.stuck, std::vector<std::string>{"burst"});
  for (std::size_t i = 1; i < sim.trace().size(); ++i) EXPECT_GE(sim.trace()[i].time_ns, sim.trace()[i - 1].time_ns);
}

TEST(Simulator, DeliveryBudget) {
  Simulator sim(round_costs());
  auto c = sim.add_node("client", sim.add_host("c"), std::make_unique<Pinger>(100), true);
  auto s = sim.add_node("server", sim.add_host("s"), std::make_unique<Ponger>());
  sim.connect(c, Port::Up, s, Port::Down, 1, "l");
  EXPECT_THROW(sim.run(10), Error);
}

// ---------------------------------------------------------------------------
// Scenarios

ScenarioConfig config(Protocol proto, noise::Pattern p, Mode m) {
  ScenarioConfig c;
  c.protocol = proto;
  c.pattern = p;
  c.mode = m;
  c.workloads = {Workload{4096}};
  return c;
}

std::string jsonl(const ScenarioResult& r) {
  std::ostringstream os;
  r.write_jsonl(os);
  return os.str();
}

TEST(Scenario, DeterministicForAGivenSeed) {
  auto c = config(Protocol::NoiXe, noise::Pattern::XX, Mode::Spx);
  c.clients = 3;
  auto a = jsonl(run_scenario(c));
  auto b = jsonl(run_scenario(c));
  EXPECT_EQ(a, b);
  c.seed = 2;
  EXPECT_NE(a, jsonl(run_scenario(c)));
}

TEST(Scenario, TraceLinesAreJsonWithTheDocumentedKeys) {
  auto r = run_scenario(config(Protocol::Tlx, noise::Pattern::XX, Mode::Spx));
  std::istringstream in(jsonl(r));
  std::string line;
  std::size_t n = 0;
  for (; std::getline(in, line); ++n) {
    auto j = nlohmann::json::parse(line);
    for (auto key : {"seq", "sent_ns", "time_ns", "link", "conn", "from", "to", "flight", "type", "flags", "bytes",
                     "spx_bytes", "payload"}) {
      EXPECT_TRUE(j.contains(key)) << key;
    }
    EXPECT_EQ(j["seq"].get<std::size_t>(), n);
    EXPECT_EQ(j["payload"].get<std::string>().size() % 2, 0u);
  }
  EXPECT_EQ(n, r.trace.size());
}

struct Case {
  Protocol protocol;
  noise::Pattern pattern;
};

class AllDeployments : public ::testing::TestWithParam<Case> {};

TEST_P(AllDeployments, EveryModeCompletesAndEchoes) {
  auto [proto, pattern] = GetParam();
  for (auto mode : {Mode::E2E, Mode::Split, Mode::Spx}) {
    auto r = run_scenario(config(proto, pattern, mode));
    ASSERT_TRUE(r.all_success()) << to_string(mode) << ": " << r.connections[0].client_error << " / "
                                 << r.connections[0].edge_error << " / " << r.connections[0].server_error;
    EXPECT_EQ(r.connections[0].bytes_echoed, 4096u);
    EXPECT_FALSE(r.run.deadlock);
  }
}

TEST_P(AllDeployments, SpxKeyTriangle) {
  auto [proto, pattern] = GetParam();
  auto r = run_scenario(config(proto, pattern, Mode::Spx));
  const auto& c = r.connections[0];
  ASSERT_TRUE(c.spx_established);
  ASSERT_TRUE(c.client_key && c.server_key && c.edge_key);
  EXPECT_EQ(*c.client_key, *c.server_key);
  EXPECT_EQ(*c.edge_key, *c.client_key);
  if (proto == Protocol::NoiXe) {
    ASSERT_TRUE(c.client_reverse_key && c.server_reverse_key && c.edge_reverse_key);
    EXPECT_EQ(*c.edge_reverse_key, *c.client_reverse_key);
    EXPECT_EQ(*c.server_reverse_key, *c.client_reverse_key);
  }
  EXPECT_TRUE(c.keys_agree());
  // A passive observer of every link never sees the session keys.
  EXPECT_FALSE(trace_contains(r.trace, *c.client_key));
  if (c.client_reverse_key) EXPECT_FALSE(trace_contains(r.trace, *c.client_reverse_key));
}

INSTANTIATE_TEST_SUITE_P(Protocols, AllDeployments,
                         ::testing::Values(Case{Protocol::Tlx, noise::Pattern::XX}, Case{Protocol::NoiXe, noise::Pattern::NN},
                                           Case{Protocol::NoiXe, noise::Pattern::NK}, Case{Protocol::NoiXe, noise::Pattern::XK},
                                           Case{Protocol::NoiXe, noise::Pattern::XX}, Case{Protocol::NoiXe, noise::Pattern::IK}),
                         [](const auto& info) {
                           return info.param.protocol == Protocol::Tlx
                                      ? std::string("TLX")
                                      : "NoiXe_" + std::string(noise::pattern_name(info.param.pattern));
                         });

TEST(Scenario, UnawareServerFallsBackToRelay) {
  auto c = config(Protocol::Tlx, noise::Pattern::XX, Mode::Spx);
  c.server_spx_capable = false;
  auto r = run_scenario(c);
  ASSERT_TRUE(r.all_success());
  EXPECT_FALSE(r.connections[0].spx_established);
  EXPECT_EQ(r.connections[0].bytes_echoed, 4096u);
}

TEST(Scenario, SpxPayloadIsTwoReportsAndAGrant) {
  for (std::size_t grant : {core::kNaturalGrantSize, std::size_t{66}, std::size_t{128}}) {
    auto c = config(Protocol::NoiXe, noise::Pattern::NK, Mode::Spx);
    c.grant_size = grant;
    auto r = run_scenario(c);
    EXPECT_EQ(r.link(kLinkEdgeServer).spx_payload, 2 * see::kReportSize + grant);
    EXPECT_EQ(r.link(kLinkClientEdge).spx_payload, 0u);
  }
}

TEST(Scenario, ClientSeesTheSameMessagesAsEndToEnd) {
  auto e2e = run_scenario(config(Protocol::Tlx, noise::Pattern::XX, Mode::E2E));
  auto spx = run_scenario(config(Protocol::Tlx, noise::Pattern::XX, Mode::Spx));
  const auto& a = e2e.connections[0].observed;
  const auto& b = spx.connections[0].observed;
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].type, b[i].type);
    EXPECT_EQ(a[i].from_client, b[i].from_client);
  }
}

TEST(Scenario, EnclaveCapStillServesEveryClient) {
  auto c = config(Protocol::NoiXe, noise::Pattern::XX, Mode::Spx);
  c.clients = 6;
  c.enclave_cap_bytes = 2 * 200;
  auto r = run_scenario(c);
  EXPECT_TRUE(r.all_success());
  for (const auto& conn : r.connections) EXPECT_EQ(conn.bytes_echoed, 4096u);
}

TEST(Attack, OutcomesAgainstSpxAndStrawmen) {
  for (auto kind : {AttackKind::Cuckoo, AttackKind::Tocttou}) {
    for (auto proto : {Protocol::Tlx, Protocol::NoiXe}) {
      for (std::uint64_t seed = 1; seed <= 4; ++seed) {
        AttackConfig a;
        a.kind = kind;
        a.protocol = proto;
        a.seed = seed;
        auto r = run_attack(a);
        EXPECT_EQ(r.outcome, AttackOutcome::AttackDefeated) << to_string(kind) << " " << to_string(r.tactic);
        EXPECT_FALSE(r.attacker_recovered_key);
        // A laundered report is genuine; only its own enclave can open the grant.
        if (r.tactic != Tactic::Launder) EXPECT_FALSE(r.server_accepted_bind) << to_string(r.tactic);
        a.strawman = true;
        auto s = run_attack(a);
        EXPECT_EQ(s.outcome, AttackOutcome::AttackSucceeded) << to_string(kind) << " " << to_string(s.tactic);
        EXPECT_TRUE(s.attacker_recovered_key);
      }
    }
  }
}

}  // namespace
