#pragma once

// Noise framework subset (25519, ChaChaPoly, SHA256) with patterns NN, NK,
// XK, XX and IK, plus NoiXe: the prologue exchange that carries the SPX
// extensions and the edge-side Handler that replicates (ck, h) from the
// relayed messages.

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "spx/crypto.hpp"
#include "spx/spx_core.hpp"
#include "spx/wire.hpp"

namespace spx::noise {

inline constexpr std::size_t kMaxMessage = 65535;
inline constexpr std::size_t kMaxPlaintext = kMaxMessage - crypto::kTagLen;

enum class Pattern { NN, NK, XK, XX, IK };
enum class Token { E, S, EE, ES, SE, SS };
enum class Role { Initiator, Responder };

inline constexpr std::array<Pattern, 5> kAllPatterns = {Pattern::NN, Pattern::NK, Pattern::XK, Pattern::XX,
                                                        Pattern::IK};

struct PatternDef {
  std::string_view name;
  // Responder static known to the initiator before the handshake.
  bool responder_static_pre = false;
  // Message i travels initiator->responder when i is even.
  std::vector<std::vector<Token>> messages;
};

const PatternDef& pattern_def(Pattern p);
std::string_view pattern_name(Pattern p);
std::optional<Pattern> parse_pattern(std::string_view name);
std::string protocol_name(Pattern p);
bool initiator_needs_static(Pattern p);
// Index of the first message carrying a DH token.
std::size_t first_dh_message(Pattern p);
std::size_t final_message(Pattern p);
bool server_final(Pattern p);
// True when the responder holds its final message until the edge's
// attestation arrives, so that the grant can ride with it.
bool grant_with_final(Pattern p);

// Prologue payload: ASCII protocol name, optionally followed by TLV
// extensions (whose type bytes are >= 0x80).
Bytes prologue_encode(Pattern p);
std::optional<Pattern> prologue_detect(ByteView payload);
ByteView prologue_name(ByteView payload);

class CipherState {
 public:
  void initialize_key(const Key32& k) {
    key_ = crypto::SymmetricKey{k};
    n_ = 0;
  }
  bool has_key() const { return key_.has_value(); }
  Bytes encrypt_with_ad(ByteView ad, ByteView plaintext);
  Bytes decrypt_with_ad(ByteView ad, ByteView ciphertext);
  std::uint64_t nonce() const { return n_; }
  const std::optional<crypto::SymmetricKey>& key() const { return key_; }

 private:
  std::optional<crypto::SymmetricKey> key_;
  std::uint64_t n_ = 0;
};

// 4 zero bytes followed by the 64-bit little-endian counter.
crypto::Nonce transport_nonce(std::uint64_t n);

class SymmetricState {
 public:
  explicit SymmetricState(std::string_view protocol_name);
  void mix_key(ByteView ikm);
  void mix_hash(ByteView data);
  Bytes encrypt_and_hash(ByteView plaintext);
  Bytes decrypt_and_hash(ByteView ciphertext);
  std::pair<CipherState, CipherState> split() const;
  const Key32& ck() const { return ck_; }
  const Key32& h() const { return h_; }
  bool has_key() const { return cs_.has_key(); }

 private:
  Key32 ck_{};
  Key32 h_{};
  CipherState cs_;
};

// Transport keys from a final chaining key.
std::pair<CipherState, CipherState> split_chaining_key(const Key32& ck);

struct HandshakeConfig {
  Pattern pattern = Pattern::XX;
  Role role = Role::Initiator;
  Bytes prologue;
  std::optional<crypto::KeyPair> s;
  std::optional<Key32> rs;
};

class HandshakeState {
 public:
  HandshakeState(HandshakeConfig cfg, crypto::Drbg& rng);
  Bytes write_message(ByteView payload);
  Bytes read_message(ByteView message);
  bool my_turn() const;
  bool finished() const { return index_ >= pattern_def(cfg_.pattern).messages.size(); }
  std::size_t message_index() const { return index_; }
  const Key32& ck() const { return sym_.ck(); }
  const Key32& h() const { return sym_.h(); }
  // Initiator-to-responder and responder-to-initiator transport states.
  std::pair<CipherState, CipherState> split() const;
  const std::optional<Key32>& remote_static() const { return rs_; }

 private:
  Key32 dh_for(Token t) const;

  HandshakeConfig cfg_;
  crypto::Drbg& rng_;
  SymmetricState sym_;
  std::optional<crypto::KeyPair> s_;
  std::optional<crypto::KeyPair> e_;
  std::optional<Key32> rs_;
  std::optional<Key32> re_;
  std::size_t index_ = 0;
};

// Edge-side replica of the symmetric state. Holds only public values: h is
// followed exactly; ck is known until the first DH token and again once the
// final chaining key is granted.
class Handler {
 public:
  Handler(Pattern p, ByteView prologue, std::optional<Key32> responder_static);
  void observe(ByteView message);
  void learn_chaining_key(const Key32& ck) { ck_ = ck; }
  const Key32& h() const { return h_; }
  const std::optional<Key32>& ck() const { return ck_; }
  std::size_t message_index() const { return index_; }
  Pattern pattern() const { return pattern_; }

 private:
  Pattern pattern_;
  Key32 h_{};
  std::optional<Key32> ck_;
  bool has_key_ = false;
  std::size_t index_ = 0;
};

// ---------------------------------------------------------------------------
// NoiXe endpoints

using Outputs = std::vector<wire::WireMessage>;

struct InitiatorConfig {
  Pattern pattern = Pattern::XX;
  std::optional<crypto::KeyPair> s;
  std::optional<Key32> responder_static;
  std::uint64_t seed = 1;
};

class InitiatorCore {
 public:
  explicit InitiatorCore(InitiatorConfig cfg);
  Outputs start();
  Outputs on_message(const wire::WireMessage& msg);
  bool complete() const { return complete_; }
  wire::WireMessage seal(ByteView plaintext);
  Bytes open(const wire::WireMessage& msg);
  const HandshakeState& handshake() const { return *hs_; }
  // Transport keys after completion (send, receive).
  const CipherState& send_state() const { return send_; }
  const CipherState& recv_state() const { return recv_; }

 private:
  Outputs write_if_turn();
  void finish();

  InitiatorConfig cfg_;
  crypto::Drbg rng_;
  std::optional<HandshakeState> hs_;
  bool started_ = false;
  bool complete_ = false;
  CipherState send_;
  CipherState recv_;
};

struct ResponderConfig {
  crypto::KeyPair s;
  // Signs the SPX response report.
  const crypto::SigningKey* spx_identity = nullptr;
  const core::ServerSpxConfig* spx = nullptr;
  std::uint64_t seed = 2;
};

class ResponderCore {
 public:
  explicit ResponderCore(ResponderConfig cfg);
  Outputs on_message(const wire::WireMessage& msg);
  bool complete() const { return complete_; }
  bool granted() const { return granted_; }
  std::optional<Pattern> pattern() const { return pattern_; }
  wire::WireMessage seal(ByteView plaintext);
  Bytes open(const wire::WireMessage& msg);
  const HandshakeState& handshake() const { return *hs_; }
  const CipherState& send_state() const { return send_; }
  const CipherState& recv_state() const { return recv_; }
  const core::ServerBinding* binding() const { return binding_ ? &*binding_ : nullptr; }
  const Key32& final_ck() const { return final_ck_; }

 private:
  Outputs write_next();
  Outputs after_progress();
  void finish();

  ResponderConfig cfg_;
  crypto::Drbg rng_;
  std::optional<Pattern> pattern_;
  std::optional<HandshakeState> hs_;
  std::optional<core::ServerBinding> binding_;
  bool waiting_for_bind_ = false;
  bool complete_ = false;
  bool granted_ = false;
  Key32 final_ck_{};
  CipherState send_;
  CipherState recv_;
};

// Edge adapter: replicates the handshake through a Handler.
class EdgeAdapter : public core::ProtocolAdapter {
 public:
  EdgeAdapter(Pattern p, std::optional<Key32> responder_static);
  ProtocolId protocol() const override { return ProtocolId::NoiXe; }
  std::string describe() const override { return "NoiXe/" + std::string(pattern_name(pattern_)); }
  const std::vector<core::Step>& sequence() const override { return sequence_; }
  std::size_t bind_after() const override { return 2 + first_dh_message(pattern_); }
  core::GrantTiming grant_timing() const override;
  std::size_t extension_offset(const wire::WireMessage& hello) const override;
  void observe(const wire::WireMessage& msg, core::Direction dir) override;
  SpxSession make_session(ByteView key_material, const std::string& session_id) const override;
  std::unique_ptr<core::RecordService> make_service(const SpxSession& session) const override;

  Pattern pattern() const { return pattern_; }
  const Handler* handler() const { return handler_ ? &*handler_ : nullptr; }

 private:
  Pattern pattern_;
  std::optional<Key32> responder_static_;
  std::vector<core::Step> sequence_;
  mutable std::optional<Handler> handler_;
};

core::AdapterFactory adapter_factory(std::optional<Key32> responder_static);

class EchoService : public core::RecordService {
 public:
  explicit EchoService(const SpxSession& session);
  std::vector<wire::WireMessage> on_client(const wire::WireMessage& msg) override;

 private:
  CipherState recv_;
  CipherState send_;
};

}  // namespace spx::noise
