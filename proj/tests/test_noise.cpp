#include <gtest/gtest.h>

#include "oracles.hpp"
#include "spx/noise.hpp"

using namespace spx;
using namespace spx::noise;
using namespace spx::oracle;

namespace {

Bytes str_bytes(std::string_view s) { return Bytes(s.begin(), s.end()); }

class NoiseOracle : public ::testing::TestWithParam<Pattern> {};

TEST_P(NoiseOracle, StatesMatchReferenceAfterEveryMessage) {
  auto p = GetParam();
  const std::uint64_t iseed = 101, rseed = 202;
  crypto::Drbg keys(7);
  Keys k;
  k.si = crypto::KeyPair::generate(keys);
  k.sr = crypto::KeyPair::generate(keys);
  {
    crypto::Drbg ri(iseed), rr(rseed);
    k.ei = crypto::KeyPair::generate(ri);
    k.er = crypto::KeyPair::generate(rr);
  }
  auto prologue = prologue_encode(p);
  auto expect = oracle_run(p, k, prologue);

  crypto::Drbg ri(iseed), rr(rseed);
  HandshakeConfig ic{p, Role::Initiator, prologue, k.si, std::nullopt};
  if (pattern_def(p).responder_static_pre) ic.rs = k.sr.public_key;
  HandshakeConfig rc{p, Role::Responder, prologue, k.sr, std::nullopt};
  HandshakeState init(ic, ri), resp(rc, rr);
  Handler handler(p, prologue, pattern_def(p).responder_static_pre ? std::optional(k.sr.public_key) : std::nullopt);
  bool dh_seen = false;

  ASSERT_EQ(expect.messages.size(), pattern_def(p).messages.size());
  for (std::size_t i = 0; i < expect.messages.size(); ++i) {
    auto& w = i % 2 == 0 ? init : resp;
    auto& r = i % 2 == 0 ? resp : init;
    auto msg = w.write_message({});
    EXPECT_EQ(msg, expect.messages[i]) << "message " << i;
    r.read_message(msg);
    handler.observe(msg);
    EXPECT_EQ(w.h(), expect.h_after[i]);
    EXPECT_EQ(r.h(), expect.h_after[i]);
    EXPECT_EQ(w.ck(), expect.ck_after[i]);
    EXPECT_EQ(r.ck(), expect.ck_after[i]);
    EXPECT_EQ(handler.h(), expect.h_after[i]) << "handler h after message " << i;
    if (i >= first_dh_message(p)) dh_seen = true;
    if (dh_seen) {
      EXPECT_FALSE(handler.ck().has_value());
    } else {
      ASSERT_TRUE(handler.ck().has_value());
      EXPECT_EQ(*handler.ck(), expect.ck_after[i]);
    }
  }
  ASSERT_TRUE(init.finished());
  ASSERT_TRUE(resp.finished());
  EXPECT_EQ(init.ck(), expect.final_ck);
  handler.learn_chaining_key(resp.ck());
  EXPECT_EQ(*handler.ck(), expect.final_ck);

  auto [i1, i2] = init.split();
  auto [r1, r2] = resp.split();
  auto ref = crypto::hkdf(expect.final_ck, {}, 2);
  EXPECT_EQ(i1.key()->bytes, ref[0]);
  EXPECT_EQ(r1.key()->bytes, ref[0]);
  EXPECT_EQ(i2.key()->bytes, ref[1]);
  EXPECT_EQ(r2.key()->bytes, ref[1]);
  auto ct = i1.encrypt_with_ad({}, view(std::string("ping")));
  EXPECT_EQ(r1.decrypt_with_ad({}, ct), Bytes({'p', 'i', 'n', 'g'}));
}

INSTANTIATE_TEST_SUITE_P(AllPatterns, NoiseOracle, ::testing::ValuesIn(kAllPatterns),
                         [](const auto& info) { return std::string(pattern_name(info.param)); });

TEST(Noise, PatternNamesAndShape) {
  for (auto p : kAllPatterns) {
    EXPECT_EQ(parse_pattern(pattern_name(p)), p);
    EXPECT_EQ(prologue_detect(prologue_encode(p)), p);
  }
  EXPECT_FALSE(parse_pattern("KK"));
  EXPECT_TRUE(initiator_needs_static(Pattern::XX));
  EXPECT_TRUE(initiator_needs_static(Pattern::IK));
  EXPECT_FALSE(initiator_needs_static(Pattern::NK));
  EXPECT_EQ(first_dh_message(Pattern::NK), 0u);
  EXPECT_EQ(first_dh_message(Pattern::XX), 1u);
  EXPECT_TRUE(server_final(Pattern::IK));
  EXPECT_FALSE(server_final(Pattern::XX));
  EXPECT_TRUE(grant_with_final(Pattern::NK));
  EXPECT_FALSE(grant_with_final(Pattern::NN));
}

TEST(Noise, TransportNonceIsLittleEndianAfterZeroPad) {
  auto n = transport_nonce(0x0102030405060708ull);
  crypto::Nonce want = {0, 0, 0, 0, 8, 7, 6, 5, 4, 3, 2, 1};
  EXPECT_EQ(n, want);
}

TEST(Noise, OutOfTurnAndTamper) {
  crypto::Drbg a(1), b(2), keys(3);
  auto sr = crypto::KeyPair::generate(keys);
  HandshakeState init({Pattern::NK, Role::Initiator, {}, std::nullopt, sr.public_key}, a);
  HandshakeState resp({Pattern::NK, Role::Responder, {}, sr, std::nullopt}, b);
  EXPECT_THROW(init.read_message(Bytes(48)), Error);
  auto m = init.write_message(view(std::string("hi")));
  m.back() ^= 1;
  EXPECT_THROW(resp.read_message(m), Error);
}

TEST(Noise, OversizedPayloadRejected) {
  crypto::Drbg a(1);
  HandshakeState init({Pattern::NN, Role::Initiator, {}, std::nullopt, std::nullopt}, a);
  try {
    init.write_message(Bytes(kMaxMessage));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Oversized);
  }
}

TEST(Noise, ResponderRejectsUnknownPrologue) {
  crypto::Drbg keys(4);
  ResponderCore r({crypto::KeyPair::generate(keys), nullptr, nullptr, 9});
  try {
    r.on_message(wire::make(wire::MsgType::Prologue, str_bytes("Noise_KK_25519_ChaChaPoly_SHA256")));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnsupportedPattern);
  }
}

TEST(Noise, CoresCompleteDirectly) {
  crypto::Drbg keys(5);
  auto sr = crypto::KeyPair::generate(keys);
  for (auto p : kAllPatterns) {
    InitiatorConfig ic;
    ic.pattern = p;
    if (pattern_def(p).responder_static_pre) ic.responder_static = sr.public_key;
    ic.seed = 11;
    InitiatorCore i(ic);
    ResponderCore r({sr, nullptr, nullptr, 12});
    std::vector<wire::WireMessage> to_r = i.start(), to_i;
    for (int guard = 0; guard < 10 && (!to_r.empty() || !to_i.empty()); ++guard) {
      for (auto& m : to_r) {
        auto out = r.on_message(m);
        to_i.insert(to_i.end(), out.begin(), out.end());
      }
      to_r.clear();
      for (auto& m : to_i) {
        auto out = i.on_message(m);
        to_r.insert(to_r.end(), out.begin(), out.end());
      }
      to_i.clear();
    }
    ASSERT_TRUE(i.complete()) << pattern_name(p);
    ASSERT_TRUE(r.complete()) << pattern_name(p);
    EXPECT_EQ(i.handshake().ck(), r.final_ck());
    EXPECT_EQ(i.send_state().key(), r.recv_state().key());
    auto sealed = i.seal(view(std::string("data")));
    EXPECT_EQ(r.open(sealed), Bytes({'d', 'a', 't', 'a'}));
    EXPECT_FALSE(r.granted());
  }
}

}  // namespace

TEST(Noise, SharedCheckAgreesAcrossSeeds) {
  for (auto p : kAllPatterns) {
    for (std::uint64_t s = 1; s <= 3; ++s) EXPECT_EQ(noise_check(p, 10 + s, 20 + s), "") << pattern_name(p);
  }
}
