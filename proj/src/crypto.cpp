#include "spx/crypto.hpp"

#include <sodium.h>

#include <algorithm>
#include <cstring>

namespace spx::crypto {
namespace {

struct SodiumInit {
  SodiumInit() {
    if (sodium_init() < 0) throw std::runtime_error("libsodium initialisation failed");
  }
};

void ensure_init() { static SodiumInit init; }

bool all_zero(ByteView v) {
  return std::all_of(v.begin(), v.end(), [](std::uint8_t b) { return b == 0; });
}

static_assert(sizeof(crypto_hash_sha256_state) <= 128);

}  // namespace

OpCounters OpCounters::operator-(const OpCounters& o) const {
  return {keygen - o.keygen, dh - o.dh, sign - o.sign, verify - o.verify,
          aead_calls - o.aead_calls, aead_bytes - o.aead_bytes, hash_calls - o.hash_calls};
}

OpCounters& op_counters() {
  thread_local OpCounters counters;
  return counters;
}

Drbg::Drbg(std::uint64_t seed) {
  ensure_init();
  Bytes material(8);
  for (int i = 0; i < 8; ++i) material[i] = static_cast<std::uint8_t>(seed >> (8 * i));
  seed_ = hash(material);
}

void Drbg::fill(std::span<std::uint8_t> out) {
  ensure_init();
  std::array<std::uint8_t, crypto_stream_chacha20_ietf_NONCEBYTES> nonce{};
  for (int i = 0; i < 8; ++i) nonce[4 + i] = static_cast<std::uint8_t>(counter_ >> (8 * i));
  ++counter_;
  crypto_stream_chacha20_ietf(out.data(), out.size(), nonce.data(), seed_.data());
}

Key32 Drbg::key32() {
  Key32 k{};
  fill(k);
  return k;
}

std::uint64_t Drbg::next_u64() {
  std::array<std::uint8_t, 8> b{};
  fill(b);
  std::uint64_t v = 0;
  for (auto x : b) v = (v << 8) | x;
  return v;
}

Drbg Drbg::fork(std::string_view label) {
  Bytes material(seed_.begin(), seed_.end());
  append(material, view(label));
  auto child = key32();
  append(material, child);
  return Drbg(hash(material));
}

KeyPair KeyPair::generate(Drbg& rng) { return from_private(rng.key32()); }

KeyPair KeyPair::from_private(const Key32& private_key) {
  ensure_init();
  ++op_counters().keygen;
  KeyPair kp;
  kp.private_key = private_key;
  crypto_scalarmult_base(kp.public_key.data(), kp.private_key.data());
  return kp;
}

SigningKey SigningKey::generate(Drbg& rng) { return from_seed(rng.key32()); }

SigningKey SigningKey::from_seed(const Key32& seed) {
  ensure_init();
  SigningKey key;
  key.seed = seed;
  std::array<std::uint8_t, crypto_sign_SECRETKEYBYTES> sk{};
  crypto_sign_seed_keypair(key.public_key.data(), sk.data(), seed.data());
  sodium_memzero(sk.data(), sk.size());
  return key;
}

Key32 dh(const KeyPair& local, const Key32& remote_public) {
  ensure_init();
  ++op_counters().dh;
  if (all_zero(remote_public)) throw Error(ErrorCode::InvalidPoint, "all-zero public key");
  Key32 shared{};
  if (crypto_scalarmult(shared.data(), local.private_key.data(), remote_public.data()) != 0) {
    throw Error(ErrorCode::InvalidPoint, "low-order public key");
  }
  return shared;
}

Bytes aead_seal(const SymmetricKey& key, const Nonce& nonce, ByteView aad, ByteView plaintext) {
  ensure_init();
  ++op_counters().aead_calls;
  op_counters().aead_bytes += plaintext.size();
  Bytes out(plaintext.size() + kTagLen);
  unsigned long long out_len = 0;
  crypto_aead_chacha20poly1305_ietf_encrypt(out.data(), &out_len, plaintext.data(), plaintext.size(),
                                            aad.data(), aad.size(), nullptr, nonce.data(),
                                            key.bytes.data());
  out.resize(out_len);
  return out;
}

Bytes aead_open(const SymmetricKey& key, const Nonce& nonce, ByteView aad, ByteView ciphertext) {
  ensure_init();
  ++op_counters().aead_calls;
  if (ciphertext.size() < kTagLen) throw Error(ErrorCode::AuthFailure, "ciphertext shorter than tag");
  op_counters().aead_bytes += ciphertext.size() - kTagLen;
  Bytes out(ciphertext.size() - kTagLen);
  unsigned long long out_len = 0;
  if (crypto_aead_chacha20poly1305_ietf_decrypt(out.data(), &out_len, nullptr, ciphertext.data(),
                                                ciphertext.size(), aad.data(), aad.size(),
                                                nonce.data(), key.bytes.data()) != 0) {
    throw Error(ErrorCode::AuthFailure, "AEAD tag mismatch");
  }
  out.resize(out_len);
  return out;
}

Digest hash(ByteView data) {
  ensure_init();
  ++op_counters().hash_calls;
  Digest d{};
  crypto_hash_sha256(d.data(), data.data(), data.size());
  return d;
}

Digest hmac(ByteView key, ByteView data) {
  ensure_init();
  ++op_counters().hash_calls;
  crypto_auth_hmacsha256_state st;
  crypto_auth_hmacsha256_init(&st, key.data(), key.size());
  crypto_auth_hmacsha256_update(&st, data.data(), data.size());
  Digest d{};
  crypto_auth_hmacsha256_final(&st, d.data());
  return d;
}

std::vector<Key32> hkdf(const Key32& chaining_key, ByteView input, int n_outputs) {
  if (n_outputs < 1 || n_outputs > 3) throw std::invalid_argument("hkdf: n_outputs must be 1..3");
  auto temp_key = hmac(chaining_key, input);
  std::vector<Key32> out;
  Bytes block;
  for (int i = 1; i <= n_outputs; ++i) {
    block.push_back(static_cast<std::uint8_t>(i));
    out.push_back(hmac(temp_key, block));
    block.assign(out.back().begin(), out.back().end());
  }
  sodium_memzero(temp_key.data(), temp_key.size());
  return out;
}

Signature sign(const SigningKey& key, ByteView message) {
  ensure_init();
  ++op_counters().sign;
  std::array<std::uint8_t, crypto_sign_PUBLICKEYBYTES> pk{};
  std::array<std::uint8_t, crypto_sign_SECRETKEYBYTES> sk{};
  crypto_sign_seed_keypair(pk.data(), sk.data(), key.seed.data());
  Signature sig;
  sig.signer = key.public_key;
  crypto_sign_detached(sig.bytes.data(), nullptr, message.data(), message.size(), sk.data());
  sodium_memzero(sk.data(), sk.size());
  return sig;
}

bool verify(const Key32& public_key, ByteView message, const Signature& sig) {
  ensure_init();
  ++op_counters().verify;
  return crypto_sign_verify_detached(sig.bytes.data(), message.data(), message.size(),
                                     public_key.data()) == 0;
}

Nonce counter_nonce(std::uint64_t counter, std::uint8_t direction) {
  Nonce n{};
  n[0] = direction;
  for (int i = 0; i < 8; ++i) n[11 - i] = static_cast<std::uint8_t>(counter >> (8 * i));
  return n;
}

Sha256::Sha256() {
  ensure_init();
  crypto_hash_sha256_init(reinterpret_cast<crypto_hash_sha256_state*>(state_.data()));
}

void Sha256::update(ByteView data) {
  crypto_hash_sha256_update(reinterpret_cast<crypto_hash_sha256_state*>(state_.data()), data.data(),
                            data.size());
}

Digest Sha256::finish() const {
  auto copy = state_;
  ++op_counters().hash_calls;
  Digest d{};
  crypto_hash_sha256_final(reinterpret_cast<crypto_hash_sha256_state*>(copy.data()), d.data());
  return d;
}

}  // namespace spx::crypto
