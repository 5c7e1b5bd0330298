#pragma once

// Protocol-agnostic SPX engine. The edge drives SpxEdgeState through the
// operations Detect, Relay, Bind, Forward, Grant and Resume; the concrete
// protocol (TLX or NoiXe) is supplied as a ProtocolAdapter. The server side
// of the binding lives in ServerBinding.

#include <functional>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include "spx/crypto.hpp"
#include "spx/see.hpp"
#include "spx/session.hpp"
#include "spx/wire.hpp"

namespace spx::core {

enum class Phase { Idle, Detected, Relaying, Bound, Granted, Established, Aborted };
std::string_view to_string(Phase p);

enum class Direction { ClientToServer, ServerToClient };

struct Step {
  Direction dir;
  wire::MsgType type;
};

enum class GrantTiming {
  // Grant travels in the same server flight as a handshake message.
  WithServerFlight,
  // Grant is a standalone server flight after the handshake finished.
  AfterFinalFlight,
};

using ChannelId = std::uint64_t;

// Serves decrypted client traffic at the edge once a session is granted.
class RecordService {
 public:
  virtual ~RecordService() = default;
  virtual std::vector<wire::WireMessage> on_client(const wire::WireMessage& msg) = 0;
};

class ProtocolAdapter {
 public:
  virtual ~ProtocolAdapter() = default;
  virtual ProtocolId protocol() const = 0;
  virtual std::string describe() const = 0;
  // Client-visible handshake messages in order (SPX frames excluded).
  virtual const std::vector<Step>& sequence() const = 0;
  // Index of the step after whose relay the edge binds.
  virtual std::size_t bind_after() const = 0;
  virtual GrantTiming grant_timing() const = 0;
  // Offset of the trailing extension block in a hello/prologue payload.
  virtual std::size_t extension_offset(const wire::WireMessage& hello) const = 0;
  // Updates replicated protocol state from a relayed, SPX-free message.
  virtual void observe(const wire::WireMessage& msg, Direction dir) = 0;
  virtual SpxSession make_session(ByteView key_material, const std::string& session_id) const = 0;
  virtual std::unique_ptr<RecordService> make_service(const SpxSession& session) const = 0;
};

// Returns an adapter when `first` opens a session of its protocol.
using AdapterFactory = std::function<std::unique_ptr<ProtocolAdapter>(const wire::WireMessage& first)>;

// ---------------------------------------------------------------------------
// Extensions and accounting helpers

wire::WireMessage embed_request(const wire::WireMessage& hello, std::size_t ext_offset);

struct Stripped {
  wire::WireMessage msg;
  // Value of the SPX response extension, if present.
  std::optional<Bytes> response;
  bool had_request = false;
};
Stripped strip_extensions(const wire::WireMessage& hello, std::size_t ext_offset);

// Offset of the extension block for the hello/prologue layouts on the wire;
// nullopt for other message types.
std::optional<std::size_t> extension_offset_for(const wire::WireMessage& msg);

// SPX-attributable bytes in one frame: the payload of SPX-internal frames
// plus the values of SPX extensions.
std::size_t spx_payload_bytes(const wire::WireMessage& msg);
// Header overhead of the same (frame header or TLV headers).
std::size_t spx_framing_bytes(const wire::WireMessage& msg);

// ---------------------------------------------------------------------------
// Grant

inline constexpr std::size_t kGrantMaterialLen = 32;
inline constexpr std::size_t kNaturalGrantSize = kGrantMaterialLen + crypto::kTagLen;

struct GrantContext {
  see::AttestNonce nonce{};
  Key32 edge_public{};
  Key32 server_public{};
  Bytes encode() const;
};

crypto::SymmetricKey grant_key(const Key32& shared_secret, const GrantContext& ctx);
// Seals key material padded so the ciphertext is exactly grant_size bytes.
Bytes seal_grant(const crypto::SymmetricKey& key, ByteView material, std::size_t grant_size,
                 const GrantContext& ctx);
Bytes open_grant(const crypto::SymmetricKey& key, ByteView ciphertext, const GrantContext& ctx);

enum class BindingMode : std::uint8_t {
  Spx,
  // Strawman: attestation over an established, unattested channel key.
  AttestAfterConnect,
  // Strawman: edge attests once at registration; later channels are trusted by identity.
  AttestBeforeConnect,
};
std::string_view to_string(BindingMode m);

// Produces the bind frame and opens the grant for one edge connection.
class Binder {
 public:
  virtual ~Binder() = default;
  virtual wire::WireMessage make_bind(const see::AttestNonce& nonce, const Key32& server_public) = 0;
  // Key material; throws AuthFailure if the grant does not open.
  virtual Bytes open_grant(ByteView grant_payload) = 0;
  // Drops any ephemeral secret.
  virtual void finish() {}
  virtual Key32 bound_public() const = 0;
};

// Binder running inside a genuine enclave.
class EnclaveBinder : public Binder {
 public:
  explicit EnclaveBinder(see::Enclave& enclave) : enclave_(enclave) {}
  wire::WireMessage make_bind(const see::AttestNonce& nonce, const Key32& server_public) override;
  Bytes open_grant(ByteView grant_payload) override;
  void finish() override;
  Key32 bound_public() const override { return ephemeral_; }
  bool holds_ephemeral() const { return minted_ && enclave_.holds_ephemeral(ephemeral_); }

 private:
  see::Enclave& enclave_;
  Key32 ephemeral_{};
  bool minted_ = false;
  GrantContext ctx_;
};

// Genuine edge under one of the strawman binding modes.
class StrawmanBinder : public Binder {
 public:
  StrawmanBinder(see::Enclave& enclave, BindingMode mode, std::string identity, crypto::Drbg& rng);
  wire::WireMessage make_bind(const see::AttestNonce& nonce, const Key32& server_public) override;
  Bytes open_grant(ByteView grant_payload) override;
  Key32 bound_public() const override { return channel_.public_key; }

 private:
  see::Enclave& enclave_;
  BindingMode mode_;
  std::string identity_;
  crypto::KeyPair channel_;
  GrantContext ctx_;
};

// Bind payload builders shared by genuine edges and adversaries.
Bytes bind_payload_after_connect(const see::AttestationReport& unbound_report, const Key32& channel_public);
Bytes bind_payload_before_connect(std::string_view identity, const Key32& channel_public);

// Strawman registry of edges attested ahead of time, keyed by identity.
class EdgeRegistry {
 public:
  void add(std::string identity);
  bool contains(const std::string& identity) const;

 private:
  mutable std::mutex mu_;
  std::set<std::string> ids_;
};

struct ServerSpxConfig {
  bool capable = true;
  BindingMode mode = BindingMode::Spx;
  see::Measurement expected_edge_measurement{};
  Key32 trusted_platform{};
  see::Measurement server_measurement{};
  std::size_t grant_size = kNaturalGrantSize;
  std::shared_ptr<EdgeRegistry> registry;
};

// Issues a nonce for an attest-before-connect registration and records the
// identity when the unbound report verifies. Returns false on rejection.
bool register_edge(const ServerSpxConfig& cfg, const std::string& identity,
                   const see::AttestationReport& report, const see::AttestNonce& issued_nonce);

// Per-connection server half of the binding.
class ServerBinding {
 public:
  ServerBinding(const ServerSpxConfig& cfg, const crypto::SigningKey& report_signer, crypto::Drbg& rng);

  // Value of the response extension: the server's report, or empty when
  // the server is not SPX-capable.
  Bytes respond();
  // Verifies an SpxAttestation frame; throws AttestationInvalid.
  void accept_bind(const wire::WireMessage& attestation);
  bool bound() const { return bound_; }
  wire::WireMessage make_grant(ByteView material);
  const see::AttestNonce& nonce() const { return nonce_; }
  const Key32& server_public() const { return ephemeral_.public_key; }
  const Key32& edge_public() const { return edge_public_; }

 private:
  const ServerSpxConfig& cfg_;
  const crypto::SigningKey& signer_;
  see::AttestNonce nonce_{};
  crypto::KeyPair ephemeral_;
  Key32 edge_public_{};
  bool bound_ = false;
};

// ---------------------------------------------------------------------------
// Edge state machine

struct EdgeConfig {
  std::vector<AdapterFactory> adapters;
  // Public key that signs the server's certificate and SPX response.
  Key32 server_pin{};
  std::string edge_id = "edge";
  std::string server_id = "server";
};

struct RelayOutput {
  std::optional<wire::WireMessage> forward;
  bool bind_now = false;
};

enum class ResumeResult { Unsupported };

class SpxEdgeState {
 public:
  SpxEdgeState(const EdgeConfig& cfg, std::unique_ptr<Binder> binder, see::Enclave* enclave,
               ChannelId channel, std::string session_id);

  enum class DetectResult { Detected, PassThrough };
  DetectResult detect(const wire::WireMessage& first);
  // Checks order, updates replicated state and returns what to forward.
  RelayOutput relay(const wire::WireMessage& msg, Direction dir);
  wire::WireMessage bind();
  // Client-facing form of a server message; nullopt for SPX-internal frames.
  std::optional<wire::WireMessage> forward(const wire::WireMessage& server_msg);
  SpxSession grant_accept(const wire::WireMessage& grant, ChannelId arrived_on);
  ResumeResult resume(ByteView blob) const;

  void abort(const std::string& reason);

  Phase phase() const { return phase_; }
  const std::vector<Phase>& history() const { return history_; }
  bool pass_through() const { return pass_through_; }
  bool handshake_relayed() const { return adapter_ && step_ >= adapter_->sequence().size(); }
  // True right after the adapter's bind step has been relayed.
  bool bind_due() const {
    return adapter_ && !pass_through_ && phase_ == Phase::Relaying && step_ == adapter_->bind_after() + 1;
  }
  ProtocolAdapter* adapter() const { return adapter_.get(); }
  Binder& binder() { return *binder_; }
  const std::optional<see::AttestNonce>& server_nonce() const { return server_nonce_; }
  ChannelId channel() const { return channel_; }
  const std::string& abort_reason() const { return abort_reason_; }

 private:
  void set_phase(Phase p);
  void expect(const wire::WireMessage& msg, Direction dir);

  const EdgeConfig& cfg_;
  std::unique_ptr<Binder> binder_;
  see::Enclave* enclave_;
  ChannelId channel_;
  std::string session_id_;
  std::unique_ptr<ProtocolAdapter> adapter_;
  Phase phase_ = Phase::Idle;
  std::vector<Phase> history_{Phase::Idle};
  std::size_t step_ = 0;
  bool pass_through_ = false;
  std::optional<see::AttestNonce> server_nonce_;
  Key32 server_public_{};
  std::string abort_reason_;
};

}  // namespace spx::core
