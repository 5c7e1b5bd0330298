#pragma once

// TLX: a TLS-style handshake subset (ephemeral X25519 key exchange, one
// cipher suite) with the SPX attestation extensions.
//
//   C -> S  ClientHello
//   S -> C  ServerHello, Certificate, ServerKeyExchange, ServerHelloDone
//   C -> S  ClientKeyExchange, ChangeCipherSpec, Finished
//   S -> C  ChangeCipherSpec, Finished
//
// With SPX the edge adds a request extension to ClientHello, strips the
// server's response from ServerHello, sends its attestation after relaying
// the client's Finished, and receives the grant ahead of the server's
// ChangeCipherSpec.

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "spx/crypto.hpp"
#include "spx/spx_core.hpp"
#include "spx/wire.hpp"

namespace spx::tlx {

inline constexpr std::uint16_t kSuite = 0xcca8;
inline constexpr std::string_view kSuiteName = "TLX_X25519_ED25519_WITH_CHACHA20_POLY1305_SHA256";
inline constexpr std::size_t kRandomLen = 32;
inline constexpr std::size_t kHelloFixedLen = kRandomLen + 2;
inline constexpr std::size_t kDefaultCertSize = 3072;
inline constexpr std::size_t kBlockSize = 1024;
inline constexpr std::uint8_t kClientDir = 0;
inline constexpr std::uint8_t kServerDir = 1;

struct Hello {
  std::array<std::uint8_t, kRandomLen> random{};
  std::uint16_t suite = kSuite;
  std::vector<wire::Extension> extensions;

  Bytes encode() const;
  static Hello parse(ByteView payload);
};

// subject (u16 len) | public key | padding (u16 len) | self-signature
struct Certificate {
  std::string subject;
  Key32 public_key{};
  Bytes padding;
  crypto::Signature signature;

  Bytes signed_body() const;
  Bytes encode() const;
  static Certificate parse(ByteView payload);
  bool self_signed() const;
};

// Self-signed certificate whose encoding is exactly total_size bytes.
Certificate make_certificate(const std::string& subject, const crypto::SigningKey& key,
                             std::size_t total_size = kDefaultCertSize);

struct ServerKeyExchange {
  Key32 dh_public{};
  crypto::Signature signature;

  Bytes encode() const;
  static ServerKeyExchange parse(ByteView payload);
};

Bytes ske_signed_body(const Hello& client, const Hello& server, const Key32& dh_public);

struct Keys {
  crypto::SymmetricKey session_key;
  Key32 master{};
};
Keys derive_keys(const Key32& dh_secret, const Hello& client, const Hello& server);

Bytes finished_data(const Key32& master, std::string_view label, const crypto::Digest& transcript);

// Record protection for ApplicationData frames; AAD is the frame tag.
class RecordLayer {
 public:
  RecordLayer(const crypto::SymmetricKey& key, std::uint8_t send_dir, std::uint8_t recv_dir)
      : key_(key), send_dir_(send_dir), recv_dir_(recv_dir) {}
  wire::WireMessage seal(ByteView plaintext);
  Bytes open(const wire::WireMessage& record);

 private:
  crypto::SymmetricKey key_;
  std::uint8_t send_dir_;
  std::uint8_t recv_dir_;
  std::uint64_t send_seq_ = 0;
  std::uint64_t recv_seq_ = 0;
};

// Identity a TLX server (or a split edge) presents.
struct Credentials {
  crypto::SigningKey key;
  Certificate certificate;
  static Credentials generate(crypto::Drbg& rng, const std::string& subject, std::size_t cert_size = kDefaultCertSize);
};

using Outputs = std::vector<wire::WireMessage>;

struct ClientConfig {
  // Pinned certificate key; nullopt accepts any self-signed certificate.
  std::optional<Key32> pin;
  std::uint64_t seed = 1;
};

// Unmodified client. Has no SPX code path: any ServerHello extension or
// SPX-flagged frame is a protocol violation.
class ClientCore {
 public:
  explicit ClientCore(ClientConfig cfg);
  Outputs start();
  Outputs on_message(const wire::WireMessage& msg);
  bool complete() const { return complete_; }
  const crypto::SymmetricKey& session_key() const { return keys_.session_key; }
  crypto::Digest transcript_digest() const { return transcript_.digest(); }
  RecordLayer& records() { return *records_; }
  std::uint16_t suite() const { return server_hello_.suite; }

 private:
  enum class State { Start, WaitServerHello, WaitCertificate, WaitKeyExchange, WaitHelloDone, WaitCcs, WaitFinished, Done };
  void absorb(const wire::WireMessage& m) { transcript_ = transcript_.absorb(m); }

  ClientConfig cfg_;
  crypto::Drbg rng_;
  State state_ = State::Start;
  Hello client_hello_;
  Hello server_hello_;
  Certificate cert_;
  ServerKeyExchange ske_;
  Keys keys_;
  wire::Transcript transcript_;
  std::optional<RecordLayer> records_;
  bool complete_ = false;
};

struct ServerConfig {
  const Credentials* credentials = nullptr;
  // Null: the server does not know SPX and ignores the request extension.
  const core::ServerSpxConfig* spx = nullptr;
  std::uint64_t seed = 2;
};

class ServerCore {
 public:
  explicit ServerCore(ServerConfig cfg);
  Outputs on_message(const wire::WireMessage& msg);
  bool complete() const { return complete_; }
  bool spx_requested() const { return binding_.has_value(); }
  bool granted() const { return granted_; }
  const crypto::SymmetricKey& session_key() const { return keys_.session_key; }
  crypto::Digest transcript_digest() const { return transcript_.digest(); }
  RecordLayer& records() { return *records_; }
  std::uint16_t suite() const { return server_hello_.suite; }
  const core::ServerBinding* binding() const { return binding_ ? &*binding_ : nullptr; }

 private:
  enum class State { WaitClientHello, WaitKeyExchange, WaitCcs, WaitFinished, Done };
  void absorb(const wire::WireMessage& m) { transcript_ = transcript_.absorb(m); }
  Outputs maybe_finish();

  ServerConfig cfg_;
  crypto::Drbg rng_;
  State state_ = State::WaitClientHello;
  Hello client_hello_;
  Hello server_hello_;
  crypto::KeyPair dh_;
  Keys keys_;
  wire::Transcript transcript_;
  std::optional<core::ServerBinding> binding_;
  bool client_finished_ = false;
  bool granted_ = false;
  bool complete_ = false;
  std::optional<RecordLayer> records_;
};

// Edge-side replica of the TLX handshake for the SPX engine.
class EdgeAdapter : public core::ProtocolAdapter {
 public:
  explicit EdgeAdapter(const Key32& server_pin) : pin_(server_pin) {}
  ProtocolId protocol() const override { return ProtocolId::Tlx; }
  std::string describe() const override { return "TLX"; }
  const std::vector<core::Step>& sequence() const override;
  std::size_t bind_after() const override { return 7; }
  core::GrantTiming grant_timing() const override { return core::GrantTiming::WithServerFlight; }
  std::size_t extension_offset(const wire::WireMessage&) const override { return kHelloFixedLen; }
  void observe(const wire::WireMessage& msg, core::Direction dir) override;
  SpxSession make_session(ByteView key_material, const std::string& session_id) const override;
  std::unique_ptr<core::RecordService> make_service(const SpxSession& session) const override;

  std::optional<std::uint16_t> suite() const { return suite_; }
  crypto::Digest transcript_digest() const { return transcript_.digest(); }

 private:
  Key32 pin_;
  std::optional<std::uint16_t> suite_;
  Hello client_hello_;
  Hello server_hello_;
  Key32 cert_key_{};
  wire::Transcript transcript_;
};

core::AdapterFactory adapter_factory(const Key32& server_pin);

// Echo service over granted record keys.
class EchoService : public core::RecordService {
 public:
  explicit EchoService(const crypto::SymmetricKey& key) : records_(key, kServerDir, kClientDir) {}
  std::vector<wire::WireMessage> on_client(const wire::WireMessage& msg) override;

 private:
  RecordLayer records_;
};

}  // namespace spx::tlx
