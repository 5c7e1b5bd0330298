#include <gtest/gtest.h>

#include "spx/spx_core.hpp"
#include "spx/tlx.hpp"

using namespace spx;
using namespace spx::tlx;
using wire::MsgType;
using wire::WireMessage;

namespace {

struct Pair {
  crypto::Drbg rng{3};
  Credentials creds = Credentials::generate(rng, "origin.example");
  ClientCore client;
  ServerCore server;

  // Pins the server's own key unless another pin is given.
  explicit Pair(std::optional<Key32> pin = std::nullopt)
      : client(ClientConfig{pin ? *pin : creds.key.public_key, 10}), server(ServerConfig{&creds, nullptr, 11}) {}

  // Runs to completion; `mutate` may alter any frame in flight.
  void run(const std::function<void(WireMessage&)>& mutate = [](WireMessage&) {}) {
    auto to_s = client.start();
    std::vector<WireMessage> to_c;
    for (int guard = 0; guard < 10 && (!to_s.empty() || !to_c.empty()); ++guard) {
      for (auto& m : to_s) {
        mutate(m);
        for (auto& r : server.on_message(m)) to_c.push_back(r);
      }
      to_s.clear();
      for (auto& m : to_c) {
        mutate(m);
        for (auto& r : client.on_message(m)) to_s.push_back(r);
      }
      to_c.clear();
    }
  }
};

TEST(Tlx, HandshakeAgreesOnKeysAndTranscript) {
  Pair p;
  p.run();
  ASSERT_TRUE(p.client.complete());
  ASSERT_TRUE(p.server.complete());
  EXPECT_EQ(p.client.session_key(), p.server.session_key());
  EXPECT_EQ(p.client.transcript_digest(), p.server.transcript_digest());
  EXPECT_EQ(p.client.suite(), kSuite);
  auto rec = p.client.records().seal(view("hello"));
  EXPECT_EQ(rec.type, MsgType::ApplicationData);
  EXPECT_EQ(p.server.records().open(rec), Bytes({'h', 'e', 'l', 'l', 'o'}));
  auto back = p.server.records().seal(view("ok"));
  EXPECT_EQ(p.client.records().open(back), Bytes({'o', 'k'}));
}

TEST(Tlx, MessageSequence) {
  Pair p;
  std::vector<MsgType> seen;
  p.run([&](WireMessage& m) { seen.push_back(m.type); });
  std::vector<MsgType> want = {MsgType::ClientHello,       MsgType::ServerHello,
                               MsgType::Certificate,       MsgType::ServerKeyExchange,
                               MsgType::ServerHelloDone,   MsgType::ClientKeyExchange,
                               MsgType::ChangeCipherSpec,  MsgType::Finished,
                               MsgType::ChangeCipherSpec,  MsgType::Finished};
  EXPECT_EQ(seen, want);
}

TEST(Tlx, PinMismatchRejected) {
  Key32 other{};
  other.fill(9);
  Pair p(other);
  try {
    p.run();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::CertMismatch);
  }
  EXPECT_FALSE(p.client.complete());
}

TEST(Tlx, TamperedFinishedRejected) {
  Pair p;
  try {
    p.run([](WireMessage& m) {
      if (m.type == MsgType::Finished) m.payload[0] ^= 1;
    });
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::FinishedMismatch);
  }
}

TEST(Tlx, TamperedKeyExchangeSignatureRejected) {
  Pair p;
  EXPECT_THROW(p.run([](WireMessage& m) {
                 if (m.type == MsgType::ServerKeyExchange) m.payload.back() ^= 1;
               }),
               Error);
  EXPECT_FALSE(p.client.complete());
}

TEST(Tlx, CertificateHasRequestedSize) {
  crypto::Drbg rng(4);
  auto key = crypto::SigningKey::generate(rng);
  for (std::size_t size : {std::size_t{200}, kDefaultCertSize}) {
    auto c = make_certificate("a.example", key, size);
    EXPECT_EQ(c.encode().size(), size);
    auto parsed = Certificate::parse(c.encode());
    EXPECT_TRUE(parsed.self_signed());
    EXPECT_EQ(parsed.public_key, key.public_key);
    parsed.padding[0] ^= 1;
    EXPECT_FALSE(parsed.self_signed());
  }
}

TEST(Tlx, HelloRoundTripWithExtensions) {
  Hello h;
  h.random.fill(5);
  h.extensions.push_back({0x10, Bytes{1, 2, 3}});
  auto enc = h.encode();
  EXPECT_EQ(enc.size(), kHelloFixedLen + 3 + 3);
  auto back = Hello::parse(enc);
  EXPECT_EQ(back.random, h.random);
  ASSERT_EQ(back.extensions.size(), 1u);
  EXPECT_EQ(back.extensions[0].value, Bytes({1, 2, 3}));
}

TEST(Tlx, RecordLayerRejectsReplayAndTamper) {
  crypto::SymmetricKey k;
  k.bytes.fill(1);
  RecordLayer a(k, kClientDir, kServerDir), b(k, kServerDir, kClientDir);
  auto r1 = a.seal(view("one"));
  auto r2 = a.seal(view("two"));
  EXPECT_EQ(b.open(r1), Bytes({'o', 'n', 'e'}));
  EXPECT_THROW(b.open(r1), Error);
  auto bad = r2;
  bad.payload[0] ^= 1;
  RecordLayer c(k, kServerDir, kClientDir);
  c.open(r1);
  EXPECT_THROW(c.open(bad), Error);
}

TEST(Tlx, SpxUnawareServerIgnoresRequest) {
  Pair p;
  p.run([](WireMessage& m) {
    if (m.type == MsgType::ClientHello) m = core::embed_request(m, kHelloFixedLen);
  });
  EXPECT_TRUE(p.server.complete());
  EXPECT_FALSE(p.server.spx_requested());
}

TEST(Tlx, ClientRejectsServerHelloExtensions) {
  Pair p;
  EXPECT_THROW(p.run([](WireMessage& m) {
                 if (m.type == MsgType::ServerHello) m = core::embed_request(m, kHelloFixedLen);
               }),
               Error);
}

TEST(Tlx, EdgeAdapterTracksClientTranscript) {
  Pair q;
  EdgeAdapter e(q.creds.key.public_key);
  std::size_t idx = 0;
  q.run([&](WireMessage& m) {
    auto dir = e.sequence()[idx].dir;
    e.observe(m, dir);
    ++idx;
  });
  EXPECT_EQ(idx, e.sequence().size());
  EXPECT_EQ(e.suite(), kSuite);
  EXPECT_EQ(e.transcript_digest(), q.client.transcript_digest());
}

}  // namespace
