#include <gtest/gtest.h>

#include <map>

#include "spx/see.hpp"

using namespace spx;
using namespace spx::see;

namespace {

struct Fixture {
  crypto::Drbg rng{11};
  std::shared_ptr<Platform> platform = std::make_shared<Platform>(rng);
};

SpxSession make_session(int i, crypto::Drbg& rng) {
  SpxSession s;
  char id[16];
  std::snprintf(id, sizeof id, "s%03d", i);
  s.session_id = id;
  s.protocol = ProtocolId::Tlx;
  s.session_key.bytes = rng.key32();
  s.client_id = "client";
  s.server_id = "server";
  return s;
}

}  // namespace

TEST(See, ReportIsFixedSizeAndVerifies) {
  Fixture f;
  Enclave e(f.platform, {});
  AttestNonce nonce{};
  f.rng.fill(nonce);
  auto eph = e.mint_ephemeral();
  auto report = e.attest(eph, nonce);
  auto bytes = report.serialize();
  EXPECT_EQ(bytes.size(), kReportSize);
  auto parsed = AttestationReport::parse(bytes);
  EXPECT_EQ(parsed.ephemeral_public, eph);
  EXPECT_TRUE(verify_report(parsed, e.measurement(), nonce, f.platform->public_key()));
}

TEST(See, VerifyRejectionReasons) {
  Fixture f;
  Enclave e(f.platform, {});
  AttestNonce nonce{};
  f.rng.fill(nonce);
  auto report = e.attest(e.mint_ephemeral(), nonce);

  AttestNonce other = nonce;
  other[0] ^= 1;
  EXPECT_EQ(verify_report(report, e.measurement(), other, f.platform->public_key()).reason,
            RejectReason::FreshnessMismatch);
  EXPECT_EQ(verify_report(report, measure("something-else"), nonce, f.platform->public_key()).reason,
            RejectReason::MeasurementMismatch);

  auto swapped = report;
  swapped.ephemeral_public[0] ^= 1;
  EXPECT_EQ(verify_report(swapped, e.measurement(), nonce, f.platform->public_key()).reason,
            RejectReason::BadSignature);

  crypto::Drbg other_rng(99);
  auto rogue = std::make_shared<Platform>(other_rng);
  Enclave forged(rogue, {});
  auto fake = forged.attest(forged.mint_ephemeral(), nonce);
  EXPECT_EQ(fake.measurement, e.measurement());
  EXPECT_EQ(verify_report(fake, e.measurement(), nonce, f.platform->public_key()).reason, RejectReason::BadSignature);
}

TEST(See, AttestRequiresOwnEphemeral) {
  Fixture f;
  Enclave e(f.platform, {});
  auto foreign = crypto::KeyPair::generate(f.rng).public_key;
  EXPECT_THROW(e.attest(foreign, AttestNonce{}), Error);
  auto eph = e.mint_ephemeral();
  EXPECT_TRUE(e.holds_ephemeral(eph));
  e.erase_ephemeral(eph);
  EXPECT_FALSE(e.holds_ephemeral(eph));
  EXPECT_THROW(e.ephemeral_dh(eph, foreign), Error);
}

TEST(See, EphemeralDhMatchesPeer) {
  Fixture f;
  Enclave e(f.platform, {});
  auto eph = e.mint_ephemeral();
  auto peer = crypto::KeyPair::generate(f.rng);
  EXPECT_EQ(e.ephemeral_dh(eph, peer.public_key), crypto::dh(peer, eph));
}

TEST(See, SealRoundTripAndTamper) {
  Fixture f;
  Enclave e(f.platform, {});
  auto s = make_session(1, f.rng);
  auto blob = e.seal(s);
  EXPECT_EQ(e.unseal(blob), s);
  auto bad = blob;
  bad.ciphertext[3] ^= 0x40;
  EXPECT_THROW(e.unseal(bad), Error);
  auto renamed = blob;
  renamed.aad = "s999";
  EXPECT_THROW(e.unseal(renamed), Error);
  Enclave other(f.platform, {.seed = 2});
  EXPECT_THROW(other.unseal(blob), Error);
}

TEST(See, SessionIdIsValidated) {
  Fixture f;
  Enclave e(f.platform, {});
  auto s = make_session(1, f.rng);
  s.session_id = "../escape";
  EXPECT_THROW(e.session_put(s), Error);
}

TEST(See, MissingSessionIsNotFound) {
  Fixture f;
  Enclave e(f.platform, {});
  try {
    e.session_get("nope");
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), ErrorCode::NotFound);
  }
}

// Random put/get sequences against an unbounded map.
class SessionCap : public ::testing::TestWithParam<std::size_t> {};

TEST_P(SessionCap, MatchesUnboundedOracle) {
  Fixture f;
  auto footprint = session_footprint(make_session(0, f.rng));
  EnclaveConfig cfg;
  cfg.memory_cap_bytes = GetParam() * footprint;
  Enclave e(f.platform, cfg);
  std::map<std::string, SpxSession> oracle;
  crypto::Drbg ops(GetParam());
  for (int step = 0; step < 1000; ++step) {
    int i = static_cast<int>(ops.next_u64() % 24);
    auto s = make_session(i, ops);
    if (ops.next_u64() % 2 == 0) {
      e.session_put(s);
      oracle[s.session_id] = s;
    } else if (auto it = oracle.find(s.session_id); it != oracle.end()) {
      ASSERT_EQ(e.session_get(s.session_id), it->second) << "step " << step;
    } else {
      EXPECT_FALSE(e.session_contains(s.session_id));
    }
    ASSERT_LE(e.stats().resident, GetParam());
  }
  for (const auto& [id, s] : oracle) EXPECT_EQ(e.session_get(id), s);

  auto raw = e.host_store().raw_contents();
  for (const auto& [id, s] : oracle) {
    EXPECT_EQ(std::search(raw.begin(), raw.end(), s.session_key.bytes.begin(), s.session_key.bytes.end()), raw.end());
  }
}

INSTANTIATE_TEST_SUITE_P(Caps, SessionCap, ::testing::Values(1, 2, 8));

TEST(See, SpillsUnderCapAndUnsealsOnDemand) {
  Fixture f;
  auto footprint = session_footprint(make_session(0, f.rng));
  EnclaveConfig cfg;
  cfg.memory_cap_bytes = 2 * footprint;
  Enclave e(f.platform, cfg);
  for (int i = 0; i < 5; ++i) e.session_put(make_session(i, f.rng));
  auto st = e.stats();
  EXPECT_EQ(st.resident, 2u);
  EXPECT_EQ(st.spilled, 3u);
  EXPECT_EQ(st.seals, 3u);
  e.session_get("s000");
  EXPECT_EQ(e.stats().unseals, 1u);
  EXPECT_EQ(e.stats().resident, 2u);
}

TEST(See, EcallSurfaceCannotReachEphemeralSecrets) {
  Fixture f;
  Enclave e(f.platform, {});
  EcallSurface host(e);
  auto eph = host.mint_ephemeral();
  auto report = host.attest(eph, AttestNonce{});
  EXPECT_EQ(report.ephemeral_public, eph);
  EXPECT_EQ(host.attest_unbound(AttestNonce{}).ephemeral_public, Key32{});
  EXPECT_EQ(host.measurement(), e.measurement());
}
