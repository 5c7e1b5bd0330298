#pragma once

// Simulated shielded execution environment. An Enclave owns a code
// measurement, a sealing key that never leaves it, the ephemeral keys it
// mints, and a session table whose least-recently-used entries are sealed
// and spilled to a host directory when the resident set exceeds the
// configured memory cap.

#include <filesystem>
#include <limits>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>

#include "spx/common.hpp"
#include "spx/crypto.hpp"
#include "spx/session.hpp"

namespace spx::see {

inline constexpr std::size_t kReportSize = 512;
inline constexpr std::size_t kAttestNonceLen = 16;
inline constexpr std::size_t kReportPaddingLen =
    kReportSize - 32 - 32 - kAttestNonceLen - crypto::kSignatureLen;
inline constexpr std::size_t kUnlimited = std::numeric_limits<std::size_t>::max();

using AttestNonce = std::array<std::uint8_t, kAttestNonceLen>;
using Measurement = Key32;

Measurement measure(std::string_view manifest);

struct AttestationReport {
  Measurement measurement{};
  Key32 ephemeral_public{};
  AttestNonce nonce{};
  std::array<std::uint8_t, kReportPaddingLen> padding{};
  crypto::Signature signature;

  // measurement | ephemeral_public | nonce | padding
  Bytes signed_body() const;
  // signed_body | signature; always kReportSize bytes.
  Bytes serialize() const;
  static AttestationReport parse(ByteView data);
};

// Builds and signs a report. Used by enclaves and by the server, whose
// ServerHello response is a report signed with its certificate key.
AttestationReport make_report(const Measurement& m, const Key32& ephemeral_public,
                              const AttestNonce& nonce, const crypto::SigningKey& signer,
                              ByteView padding_prefix = {});

enum class RejectReason { BadSignature, MeasurementMismatch, FreshnessMismatch };
std::string_view to_string(RejectReason r);

struct Verdict {
  bool accepted = false;
  RejectReason reason = RejectReason::BadSignature;
  explicit operator bool() const { return accepted; }
};

Verdict verify_report(const AttestationReport& report, const Measurement& expected_measurement,
                      const AttestNonce& expected_nonce, const Key32& platform_public);

// Processor identity: holds the attestation signing key.
class Platform {
 public:
  explicit Platform(crypto::Drbg& rng) : key_(crypto::SigningKey::generate(rng)) {}
  const Key32& public_key() const { return key_.public_key; }

 private:
  friend class Enclave;
  crypto::SigningKey key_;
};

struct SealedBlob {
  crypto::Nonce nonce{};
  Bytes ciphertext;
  std::string aad;  // session id

  Bytes to_file_bytes() const;  // nonce | ciphertext
  static SealedBlob from_file_bytes(ByteView data, std::string session_id);
};

// Untrusted host directory holding one SealedBlob per spilled session.
class HostStore {
 public:
  explicit HostStore(std::filesystem::path dir);
  void put(const std::string& id, const SealedBlob& blob);
  std::optional<SealedBlob> get(const std::string& id) const;
  void remove(const std::string& id);
  std::vector<std::string> ids() const;
  // Concatenation of every stored file, for ciphertext-only checks.
  Bytes raw_contents() const;
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path path_for(const std::string& id) const;
  std::filesystem::path dir_;
};

struct EnclaveConfig {
  std::string manifest = "spx-edge-function/v1";
  std::size_t memory_cap_bytes = kUnlimited;
  // Empty: a fresh directory under the system temp dir.
  std::filesystem::path spill_dir;
  std::uint64_t seed = 1;
};

struct EnclaveStats {
  std::size_t seals = 0;
  std::size_t unseals = 0;
  std::size_t resident = 0;
  std::size_t resident_bytes = 0;
  std::size_t spilled = 0;
};

// All member functions are linearizable (one internal mutex).
class Enclave {
 public:
  Enclave(std::shared_ptr<const Platform> platform, EnclaveConfig config);
  ~Enclave();
  Enclave(const Enclave&) = delete;
  Enclave& operator=(const Enclave&) = delete;

  const Measurement& measurement() const { return measurement_; }
  const Key32& platform_public() const { return platform_->public_key(); }
  const std::array<std::uint8_t, 16>& instance_id() const { return instance_id_; }

  // ECALL surface reachable from untrusted host code.
  Key32 mint_ephemeral();
  AttestationReport attest(const Key32& ephemeral_public, const AttestNonce& nonce);
  // Report that binds only the nonce (zero ephemeral field). Exists solely
  // for the attest-before/after-connect strawman variants.
  AttestationReport attest_unbound(const AttestNonce& nonce);

  // Enclave-resident operations. Only code that runs inside the enclave
  // (the SPX edge engine) calls these.
  Key32 ephemeral_dh(const Key32& ephemeral_public, const Key32& remote_public);
  void erase_ephemeral(const Key32& ephemeral_public);
  bool holds_ephemeral(const Key32& ephemeral_public) const;

  SealedBlob seal(const SpxSession& session);
  SpxSession unseal(const SealedBlob& blob);

  void session_put(const SpxSession& session);
  SpxSession session_get(const std::string& session_id);
  bool session_contains(const std::string& session_id) const;

  EnclaveStats stats() const;
  const HostStore& host_store() const { return *store_; }
  crypto::Drbg& rng() { return rng_; }

 private:
  SealedBlob seal_locked(const SpxSession& session);
  SpxSession unseal_locked(const SealedBlob& blob);
  void insert_resident_locked(const SpxSession& session);
  void evict_locked();

  std::shared_ptr<const Platform> platform_;
  EnclaveConfig config_;
  Measurement measurement_{};
  std::array<std::uint8_t, 16> instance_id_{};
  crypto::SymmetricKey sealing_key_;
  crypto::Drbg rng_;
  std::uint64_t seal_counter_ = 0;
  bool owns_spill_dir_ = false;

  mutable std::mutex mu_;
  std::map<Key32, crypto::KeyPair> ephemerals_;
  std::list<std::string> lru_;  // front = most recent
  struct Resident {
    SpxSession session;
    std::size_t bytes;
    std::list<std::string>::iterator lru_pos;
  };
  std::unordered_map<std::string, Resident> resident_;
  std::size_t resident_bytes_ = 0;
  std::size_t seals_ = 0;
  std::size_t unseals_ = 0;
  std::unique_ptr<HostStore> store_;
};

// The part of an enclave that untrusted host code (including a malicious
// edge operator) can invoke.
class EcallSurface {
 public:
  explicit EcallSurface(Enclave& e) : e_(e) {}
  Key32 mint_ephemeral() { return e_.mint_ephemeral(); }
  AttestationReport attest(const Key32& ephemeral_public, const AttestNonce& nonce) {
    return e_.attest(ephemeral_public, nonce);
  }
  AttestationReport attest_unbound(const AttestNonce& nonce) { return e_.attest_unbound(nonce); }
  const Measurement& measurement() const { return e_.measurement(); }

 private:
  Enclave& e_;
};

// Bytes a session occupies in the resident table.
std::size_t session_footprint(const SpxSession& s);

}  // namespace spx::see
