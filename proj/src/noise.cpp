#include "spx/noise.hpp"

#include <algorithm>

namespace spx::noise {

using wire::MsgType;
using wire::WireMessage;

namespace {

[[noreturn]] void violation(const std::string& what) { throw Error(ErrorCode::ProtocolViolation, what); }

bool is_dh(Token t) { return t != Token::E && t != Token::S; }

}  // namespace

const PatternDef& pattern_def(Pattern p) {
  using enum Token;
  static const PatternDef nn{"NN", false, {{E}, {E, EE}}};
  static const PatternDef nk{"NK", true, {{E, ES}, {E, EE}}};
  static const PatternDef xk{"XK", true, {{E, ES}, {E, EE}, {S, SE}}};
  static const PatternDef xx{"XX", false, {{E}, {E, EE, S, ES}, {S, SE}}};
  static const PatternDef ik{"IK", true, {{E, ES, S, SS}, {E, EE, SE}}};
  switch (p) {
    case Pattern::NN: return nn;
    case Pattern::NK: return nk;
    case Pattern::XK: return xk;
    case Pattern::XX: return xx;
    case Pattern::IK: return ik;
  }
  throw Error(ErrorCode::UnsupportedPattern, "unknown pattern");
}

std::string_view pattern_name(Pattern p) { return pattern_def(p).name; }

std::optional<Pattern> parse_pattern(std::string_view name) {
  for (auto p : kAllPatterns) {
    if (pattern_name(p) == name) return p;
  }
  return std::nullopt;
}

std::string protocol_name(Pattern p) {
  return "Noise_" + std::string(pattern_name(p)) + "_25519_ChaChaPoly_SHA256";
}

bool initiator_needs_static(Pattern p) {
  const auto& msgs = pattern_def(p).messages;
  for (std::size_t i = 0; i < msgs.size(); i += 2) {
    if (std::find(msgs[i].begin(), msgs[i].end(), Token::S) != msgs[i].end()) return true;
  }
  return false;
}

std::size_t first_dh_message(Pattern p) {
  const auto& msgs = pattern_def(p).messages;
  for (std::size_t i = 0; i < msgs.size(); ++i) {
    if (std::any_of(msgs[i].begin(), msgs[i].end(), is_dh)) return i;
  }
  return msgs.size() - 1;
}

std::size_t final_message(Pattern p) { return pattern_def(p).messages.size() - 1; }

bool server_final(Pattern p) { return final_message(p) % 2 == 1; }

bool grant_with_final(Pattern p) { return server_final(p) && first_dh_message(p) < final_message(p); }

Bytes prologue_encode(Pattern p) {
  auto name = protocol_name(p);
  return Bytes(name.begin(), name.end());
}

ByteView prologue_name(ByteView payload) {
  auto it = std::find_if(payload.begin(), payload.end(), [](std::uint8_t b) { return b >= 0x80; });
  return payload.first(static_cast<std::size_t>(it - payload.begin()));
}

std::optional<Pattern> prologue_detect(ByteView payload) {
  auto name = prologue_name(payload);
  std::string s(name.begin(), name.end());
  for (auto p : kAllPatterns) {
    if (protocol_name(p) == s) return p;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// CipherState / SymmetricState

crypto::Nonce transport_nonce(std::uint64_t n) {
  crypto::Nonce out{};
  for (int i = 0; i < 8; ++i) out[4 + i] = static_cast<std::uint8_t>(n >> (8 * i));
  return out;
}

Bytes CipherState::encrypt_with_ad(ByteView ad, ByteView plaintext) {
  if (!key_) return Bytes(plaintext.begin(), plaintext.end());
  return crypto::aead_seal(*key_, transport_nonce(n_++), ad, plaintext);
}

Bytes CipherState::decrypt_with_ad(ByteView ad, ByteView ciphertext) {
  if (!key_) return Bytes(ciphertext.begin(), ciphertext.end());
  auto out = crypto::aead_open(*key_, transport_nonce(n_), ad, ciphertext);
  ++n_;
  return out;
}

SymmetricState::SymmetricState(std::string_view protocol_name) {
  if (protocol_name.size() <= h_.size()) {
    std::copy(protocol_name.begin(), protocol_name.end(), h_.begin());
  } else {
    h_ = crypto::hash(view(protocol_name));
  }
  ck_ = h_;
}

void SymmetricState::mix_key(ByteView ikm) {
  auto out = crypto::hkdf(ck_, ikm, 2);
  ck_ = out[0];
  cs_.initialize_key(out[1]);
}

void SymmetricState::mix_hash(ByteView data) {
  Bytes buf(h_.begin(), h_.end());
  append(buf, data);
  h_ = crypto::hash(buf);
}

Bytes SymmetricState::encrypt_and_hash(ByteView plaintext) {
  auto ct = cs_.encrypt_with_ad(h_, plaintext);
  mix_hash(ct);
  return ct;
}

Bytes SymmetricState::decrypt_and_hash(ByteView ciphertext) {
  auto pt = cs_.decrypt_with_ad(h_, ciphertext);
  mix_hash(ciphertext);
  return pt;
}

std::pair<CipherState, CipherState> split_chaining_key(const Key32& ck) {
  auto out = crypto::hkdf(ck, {}, 2);
  CipherState c1, c2;
  c1.initialize_key(out[0]);
  c2.initialize_key(out[1]);
  return {c1, c2};
}

std::pair<CipherState, CipherState> SymmetricState::split() const { return split_chaining_key(ck_); }

// ---------------------------------------------------------------------------
// HandshakeState

HandshakeState::HandshakeState(HandshakeConfig cfg, crypto::Drbg& rng)
    : cfg_(std::move(cfg)), rng_(rng), sym_(protocol_name(cfg_.pattern)), s_(cfg_.s), rs_(cfg_.rs) {
  const auto& def = pattern_def(cfg_.pattern);
  sym_.mix_hash(cfg_.prologue);
  bool initiator = cfg_.role == Role::Initiator;
  if (initiator && initiator_needs_static(cfg_.pattern) && !s_) s_ = crypto::KeyPair::generate(rng_);
  if (!initiator && !s_) throw Error(ErrorCode::Config, "responder needs a static key");
  if (def.responder_static_pre) {
    if (initiator) {
      if (!rs_) throw Error(ErrorCode::Config, "pattern needs the responder static key");
      sym_.mix_hash(*rs_);
    } else {
      sym_.mix_hash(s_->public_key);
    }
  }
}

bool HandshakeState::my_turn() const {
  if (finished()) return false;
  bool initiator_turn = index_ % 2 == 0;
  return initiator_turn == (cfg_.role == Role::Initiator);
}

Key32 HandshakeState::dh_for(Token t) const {
  bool initiator = cfg_.role == Role::Initiator;
  auto need = [](const auto& opt, const char* what) -> const auto& {
    if (!opt) throw Error(ErrorCode::ProtocolViolation, std::string("missing ") + what);
    return *opt;
  };
  switch (t) {
    case Token::EE: return crypto::dh(need(e_, "e"), need(re_, "re"));
    case Token::ES:
      return initiator ? crypto::dh(need(e_, "e"), need(rs_, "rs")) : crypto::dh(need(s_, "s"), need(re_, "re"));
    case Token::SE:
      return initiator ? crypto::dh(need(s_, "s"), need(re_, "re")) : crypto::dh(need(e_, "e"), need(rs_, "rs"));
    case Token::SS: return crypto::dh(need(s_, "s"), need(rs_, "rs"));
    default: break;
  }
  throw Error(ErrorCode::ProtocolViolation, "not a DH token");
}

Bytes HandshakeState::write_message(ByteView payload) {
  if (!my_turn()) throw Error(ErrorCode::OutOfTurn, "write_message out of turn");
  Bytes out;
  for (auto t : pattern_def(cfg_.pattern).messages[index_]) {
    switch (t) {
      case Token::E:
        e_ = crypto::KeyPair::generate(rng_);
        append(out, e_->public_key);
        sym_.mix_hash(e_->public_key);
        break;
      case Token::S:
        append(out, sym_.encrypt_and_hash(s_->public_key));
        break;
      default:
        sym_.mix_key(dh_for(t));
        break;
    }
  }
  append(out, sym_.encrypt_and_hash(payload));
  if (out.size() > kMaxMessage) throw Error(ErrorCode::Oversized, "Noise message exceeds 65535 bytes");
  ++index_;
  return out;
}

Bytes HandshakeState::read_message(ByteView message) {
  if (finished() || my_turn()) throw Error(ErrorCode::OutOfTurn, "read_message out of turn");
  if (message.size() > kMaxMessage) throw Error(ErrorCode::Oversized, "Noise message exceeds 65535 bytes");
  Reader r(message);
  for (auto t : pattern_def(cfg_.pattern).messages[index_]) {
    switch (t) {
      case Token::E: {
        re_ = r.array<32>();
        sym_.mix_hash(*re_);
        break;
      }
      case Token::S: {
        auto len = sym_.has_key() ? 32 + crypto::kTagLen : 32;
        rs_ = to_array<32>(sym_.decrypt_and_hash(r.take(len)));
        break;
      }
      default:
        sym_.mix_key(dh_for(t));
        break;
    }
  }
  auto payload = sym_.decrypt_and_hash(r.rest());
  ++index_;
  return payload;
}

std::pair<CipherState, CipherState> HandshakeState::split() const {
  if (!finished()) throw Error(ErrorCode::ProtocolViolation, "split before handshake end");
  return sym_.split();
}

// ---------------------------------------------------------------------------
// Handler

Handler::Handler(Pattern p, ByteView prologue, std::optional<Key32> responder_static) : pattern_(p) {
  SymmetricState sym(protocol_name(p));
  sym.mix_hash(prologue);
  if (pattern_def(p).responder_static_pre) {
    if (!responder_static) throw Error(ErrorCode::Config, "handler needs the responder static key");
    sym.mix_hash(*responder_static);
  }
  h_ = sym.h();
  ck_ = sym.ck();
}

void Handler::observe(ByteView message) {
  const auto& msgs = pattern_def(pattern_).messages;
  if (index_ >= msgs.size()) violation("handshake message after pattern end");
  auto mix = [this](ByteView data) {
    Bytes buf(h_.begin(), h_.end());
    append(buf, data);
    h_ = crypto::hash(buf);
  };
  Reader r(message);
  for (auto t : msgs[index_]) {
    switch (t) {
      case Token::E:
        mix(r.take(32));
        break;
      case Token::S:
        mix(r.take(has_key_ ? 32 + crypto::kTagLen : 32));
        break;
      default:
        has_key_ = true;
        ck_.reset();
        break;
    }
  }
  mix(r.rest());
  ++index_;
}

// ---------------------------------------------------------------------------
// Initiator

InitiatorCore::InitiatorCore(InitiatorConfig cfg) : cfg_(std::move(cfg)), rng_(cfg_.seed) {}

Outputs InitiatorCore::start() {
  if (started_) violation("initiator already started");
  started_ = true;
  return {wire::make(MsgType::Prologue, prologue_encode(cfg_.pattern))};
}

Outputs InitiatorCore::write_if_turn() {
  if (!hs_->my_turn()) return {};
  auto msg = wire::make(MsgType::NoiseHandshake, hs_->write_message({}));
  if (hs_->finished()) finish();
  return {msg};
}

void InitiatorCore::finish() {
  auto [c1, c2] = hs_->split();
  send_ = c1;
  recv_ = c2;
  complete_ = true;
}

Outputs InitiatorCore::on_message(const WireMessage& msg) {
  if (msg.flags != 0) violation("unexpected frame flags");
  if (msg.type == MsgType::Alert) violation("responder alert");
  if (!hs_) {
    if (msg.type != MsgType::Prologue || msg.payload != prologue_encode(cfg_.pattern)) {
      violation("responder prologue does not match");
    }
    HandshakeConfig hc;
    hc.pattern = cfg_.pattern;
    hc.role = Role::Initiator;
    hc.prologue = msg.payload;
    hc.s = cfg_.s;
    hc.rs = cfg_.responder_static;
    hs_.emplace(std::move(hc), rng_);
    return write_if_turn();
  }
  if (complete_ || msg.type != MsgType::NoiseHandshake) violation("unexpected " + std::string(wire::name(msg.type)));
  hs_->read_message(msg.payload);
  if (hs_->finished()) {
    finish();
    return {};
  }
  return write_if_turn();
}

WireMessage InitiatorCore::seal(ByteView plaintext) {
  if (!complete_) violation("transport before handshake end");
  if (plaintext.size() > kMaxPlaintext) throw Error(ErrorCode::Oversized, "transport plaintext too large");
  return wire::make(MsgType::NoiseTransport, send_.encrypt_with_ad({}, plaintext));
}

Bytes InitiatorCore::open(const WireMessage& msg) {
  if (msg.type != MsgType::NoiseTransport) violation("expected transport message");
  return recv_.decrypt_with_ad({}, msg.payload);
}

// ---------------------------------------------------------------------------
// Responder

ResponderCore::ResponderCore(ResponderConfig cfg) : cfg_(std::move(cfg)), rng_(cfg_.seed) {}

Outputs ResponderCore::on_message(const WireMessage& msg) {
  if (msg.type == MsgType::SpxAttestation) {
    if (!binding_) violation("attestation without SPX request");
    binding_->accept_bind(msg);
    if (waiting_for_bind_) {
      waiting_for_bind_ = false;
      return write_next();
    }
    if (complete_ && !granted_) {
      granted_ = true;
      return {binding_->make_grant(final_ck_)};
    }
    return {};
  }
  if (msg.spx_internal()) violation("unexpected SPX frame");
  if (!hs_) {
    if (msg.type != MsgType::Prologue) violation("expected prologue");
    auto name = prologue_name(msg.payload);
    pattern_ = prologue_detect(name);
    if (!pattern_) throw Error(ErrorCode::UnsupportedPattern, "unknown prologue");
    auto exts = wire::decode_extensions(ByteView(msg.payload).subspan(name.size()));
    bool requested = std::any_of(exts.begin(), exts.end(), [](const auto& e) { return e.type == wire::kExtSpxRequest; });
    Bytes reply(name.begin(), name.end());
    if (requested && cfg_.spx) {
      if (!cfg_.spx_identity) throw Error(ErrorCode::Config, "SPX responder needs an identity key");
      binding_.emplace(*cfg_.spx, *cfg_.spx_identity, rng_);
      append(reply, wire::encode_extensions({{wire::kExtSpxResponse, binding_->respond()}}));
    }
    HandshakeConfig hc;
    hc.pattern = *pattern_;
    hc.role = Role::Responder;
    hc.prologue = Bytes(name.begin(), name.end());
    hc.s = cfg_.s;
    hs_.emplace(std::move(hc), rng_);
    Outputs out{wire::make(MsgType::Prologue, std::move(reply))};
    auto more = after_progress();
    out.insert(out.end(), more.begin(), more.end());
    return out;
  }
  if (msg.type != MsgType::NoiseHandshake || complete_) violation("unexpected " + std::string(wire::name(msg.type)));
  hs_->read_message(msg.payload);
  return after_progress();
}

static bool spx_active(const std::optional<core::ServerBinding>& b, const core::ServerSpxConfig* cfg) {
  return b.has_value() && cfg && cfg->capable;
}

Outputs ResponderCore::after_progress() {
  if (hs_->finished()) {
    finish();
    if (binding_ && binding_->bound() && !granted_) {
      granted_ = true;
      return {binding_->make_grant(final_ck_)};
    }
    return {};
  }
  if (!hs_->my_turn()) return {};
  bool final_next = hs_->message_index() == final_message(*pattern_);
  if (spx_active(binding_, cfg_.spx) && final_next && grant_with_final(*pattern_) && !binding_->bound()) {
    waiting_for_bind_ = true;
    return {};
  }
  return write_next();
}

Outputs ResponderCore::write_next() {
  auto msg = wire::make(MsgType::NoiseHandshake, hs_->write_message({}));
  Outputs out;
  if (hs_->finished()) {
    finish();
    if (binding_ && binding_->bound() && !granted_) {
      granted_ = true;
      out.push_back(binding_->make_grant(final_ck_));
    }
  }
  out.push_back(std::move(msg));
  return out;
}

void ResponderCore::finish() {
  auto [c1, c2] = hs_->split();
  recv_ = c1;
  send_ = c2;
  final_ck_ = hs_->ck();
  complete_ = true;
}

WireMessage ResponderCore::seal(ByteView plaintext) {
  if (!complete_) violation("transport before handshake end");
  if (plaintext.size() > kMaxPlaintext) throw Error(ErrorCode::Oversized, "transport plaintext too large");
  return wire::make(MsgType::NoiseTransport, send_.encrypt_with_ad({}, plaintext));
}

Bytes ResponderCore::open(const WireMessage& msg) {
  if (msg.type != MsgType::NoiseTransport) violation("expected transport message");
  return recv_.decrypt_with_ad({}, msg.payload);
}

// ---------------------------------------------------------------------------
// Edge adapter

EdgeAdapter::EdgeAdapter(Pattern p, std::optional<Key32> responder_static)
    : pattern_(p), responder_static_(responder_static) {
  using core::Direction;
  sequence_.push_back({Direction::ClientToServer, MsgType::Prologue});
  sequence_.push_back({Direction::ServerToClient, MsgType::Prologue});
  for (std::size_t i = 0; i < pattern_def(p).messages.size(); ++i) {
    sequence_.push_back({i % 2 == 0 ? Direction::ClientToServer : Direction::ServerToClient, MsgType::NoiseHandshake});
  }
}

core::GrantTiming EdgeAdapter::grant_timing() const {
  return grant_with_final(pattern_) ? core::GrantTiming::WithServerFlight : core::GrantTiming::AfterFinalFlight;
}

std::size_t EdgeAdapter::extension_offset(const WireMessage& hello) const {
  return prologue_name(hello.payload).size();
}

void EdgeAdapter::observe(const WireMessage& msg, core::Direction dir) {
  if (msg.type == MsgType::Prologue) {
    auto name = prologue_name(msg.payload);
    if (prologue_detect(name) != pattern_) violation("prologue names a different pattern");
    if (dir == core::Direction::ClientToServer) handler_.emplace(pattern_, name, responder_static_);
    return;
  }
  if (!handler_) violation("handshake before prologue");
  handler_->observe(msg.payload);
}

SpxSession EdgeAdapter::make_session(ByteView key_material, const std::string& session_id) const {
  auto ck = to_array<32>(key_material);
  if (handler_) handler_->learn_chaining_key(ck);
  auto [c1, c2] = split_chaining_key(ck);
  SpxSession s;
  s.session_id = session_id;
  s.protocol = ProtocolId::NoiXe;
  s.session_key = *c1.key();
  s.reverse_key = *c2.key();
  return s;
}

std::unique_ptr<core::RecordService> EdgeAdapter::make_service(const SpxSession& session) const {
  return std::make_unique<EchoService>(session);
}

core::AdapterFactory adapter_factory(std::optional<Key32> responder_static) {
  return [responder_static](const WireMessage& first) -> std::unique_ptr<core::ProtocolAdapter> {
    if (first.type != MsgType::Prologue || first.spx_internal()) return nullptr;
    auto p = prologue_detect(first.payload);
    if (!p) return nullptr;
    if (pattern_def(*p).responder_static_pre && !responder_static) return nullptr;
    return std::make_unique<EdgeAdapter>(*p, responder_static);
  };
}

EchoService::EchoService(const SpxSession& session) {
  if (!session.reverse_key) throw Error(ErrorCode::Config, "NoiXe session without reverse key");
  recv_.initialize_key(session.session_key.bytes);
  send_.initialize_key(session.reverse_key->bytes);
}

std::vector<WireMessage> EchoService::on_client(const WireMessage& msg) {
  if (msg.type != MsgType::NoiseTransport) violation("expected transport message");
  auto plain = recv_.decrypt_with_ad({}, msg.payload);
  return {wire::make(MsgType::NoiseTransport, send_.encrypt_with_ad({}, plain))};
}

}  // namespace spx::noise
