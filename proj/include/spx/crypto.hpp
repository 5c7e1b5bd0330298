#pragma once

// Cryptographic primitives shared by every protocol module: X25519,
// ChaCha20-Poly1305 (IETF), SHA-256, HMAC-SHA256 based HKDF and Ed25519.
// All functions are pure apart from the per-thread operation counters,
// which the simulator reads to charge virtual compute time.

#include <array>
#include <cstdint>
#include <optional>
#include <string>

#include "spx/common.hpp"

namespace spx::crypto {

inline constexpr std::size_t kKeyLen = 32;
inline constexpr std::size_t kTagLen = 16;
inline constexpr std::size_t kNonceLen = 12;
inline constexpr std::size_t kSignatureLen = 64;

using Nonce = std::array<std::uint8_t, kNonceLen>;
using Digest = Key32;

// Deterministic random bit generator (ChaCha20 keystream over a seed).
// Every key the simulator mints comes from one of these so that a run is
// reproducible from its seed.
class Drbg {
 public:
  explicit Drbg(std::uint64_t seed);
  explicit Drbg(const Key32& seed) : seed_(seed) {}

  void fill(std::span<std::uint8_t> out);
  Key32 key32();
  std::uint64_t next_u64();
  // Independent child generator; `label` separates the streams.
  Drbg fork(std::string_view label);

 private:
  Key32 seed_{};
  std::uint64_t counter_ = 0;
};

struct KeyPair {
  Key32 private_key{};
  Key32 public_key{};

  static KeyPair generate(Drbg& rng);
  static KeyPair from_private(const Key32& private_key);
};

struct SigningKey {
  Key32 seed{};
  Key32 public_key{};

  static SigningKey generate(Drbg& rng);
  static SigningKey from_seed(const Key32& seed);
};

struct Signature {
  std::array<std::uint8_t, kSignatureLen> bytes{};
  Key32 signer{};
};

enum class AeadAlgo : std::uint8_t { ChaCha20Poly1305 = 1 };

struct SymmetricKey {
  Key32 bytes{};
  AeadAlgo algo = AeadAlgo::ChaCha20Poly1305;

  friend bool operator==(const SymmetricKey&, const SymmetricKey&) = default;
};

// Raw X25519 shared secret. Throws InvalidPoint for the all-zero point and
// for low-order points that produce an all-zero secret.
Key32 dh(const KeyPair& local, const Key32& remote_public);

Bytes aead_seal(const SymmetricKey& key, const Nonce& nonce, ByteView aad, ByteView plaintext);
// Throws AuthFailure when the tag does not verify.
Bytes aead_open(const SymmetricKey& key, const Nonce& nonce, ByteView aad, ByteView ciphertext);

Digest hash(ByteView data);
Digest hmac(ByteView key, ByteView data);
// HKDF keyed by the chaining key with empty info; returns n_outputs (1..3)
// consecutive 32-byte blocks.
std::vector<Key32> hkdf(const Key32& chaining_key, ByteView input, int n_outputs);

Signature sign(const SigningKey& key, ByteView message);
bool verify(const Key32& public_key, ByteView message, const Signature& sig);

// 12-byte big-endian counter nonce; the first byte carries the direction so
// that both directions of one key never share a nonce.
Nonce counter_nonce(std::uint64_t counter, std::uint8_t direction = 0);

// Incremental SHA-256 with value semantics.
class Sha256 {
 public:
  Sha256();
  void update(ByteView data);
  Digest finish() const;

 private:
  alignas(16) std::array<std::uint8_t, 128> state_{};
};

struct OpCounters {
  std::uint64_t keygen = 0;
  std::uint64_t dh = 0;
  std::uint64_t sign = 0;
  std::uint64_t verify = 0;
  std::uint64_t aead_calls = 0;
  std::uint64_t aead_bytes = 0;
  std::uint64_t hash_calls = 0;

  OpCounters operator-(const OpCounters& o) const;
};

// Counters for the calling thread.
OpCounters& op_counters();

}  // namespace spx::crypto
