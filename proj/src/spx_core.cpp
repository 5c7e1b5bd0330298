#include "spx/spx_core.hpp"

#include <algorithm>

namespace spx::core {

using wire::MsgType;
using wire::WireMessage;

std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::Idle: return "Idle";
    case Phase::Detected: return "Detected";
    case Phase::Relaying: return "Relaying";
    case Phase::Bound: return "Bound";
    case Phase::Granted: return "Granted";
    case Phase::Established: return "Established";
    case Phase::Aborted: return "Aborted";
  }
  return "Unknown";
}

std::string_view to_string(BindingMode m) {
  switch (m) {
    case BindingMode::Spx: return "spx";
    case BindingMode::AttestAfterConnect: return "attest-after-connect";
    case BindingMode::AttestBeforeConnect: return "attest-before-connect";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Extensions

WireMessage embed_request(const WireMessage& hello, std::size_t ext_offset) {
  auto exts = wire::decode_extensions(ByteView(hello.payload).subspan(ext_offset));
  exts.push_back({wire::kExtSpxRequest, {}});
  WireMessage out = hello;
  out.payload.resize(ext_offset);
  append(out.payload, wire::encode_extensions(exts));
  return out;
}

Stripped strip_extensions(const WireMessage& hello, std::size_t ext_offset) {
  Stripped s;
  s.msg = hello;
  if (hello.payload.size() < ext_offset) return s;
  auto exts = wire::decode_extensions(ByteView(hello.payload).subspan(ext_offset));
  std::vector<wire::Extension> kept;
  for (auto& e : exts) {
    if (e.type == wire::kExtSpxRequest) {
      s.had_request = true;
    } else if (e.type == wire::kExtSpxResponse) {
      s.response = e.value;
    } else {
      kept.push_back(std::move(e));
    }
  }
  s.msg.payload.resize(ext_offset);
  append(s.msg.payload, wire::encode_extensions(kept));
  return s;
}

std::optional<std::size_t> extension_offset_for(const WireMessage& msg) {
  switch (msg.type) {
    case MsgType::ClientHello:
    case MsgType::ServerHello:
      return std::min<std::size_t>(msg.payload.size(), 34);
    case MsgType::Prologue: {
      auto it = std::find_if(msg.payload.begin(), msg.payload.end(), [](std::uint8_t b) { return b >= 0x80; });
      return static_cast<std::size_t>(it - msg.payload.begin());
    }
    default:
      return std::nullopt;
  }
}

namespace {

std::vector<wire::Extension> spx_extensions(const WireMessage& msg) {
  std::vector<wire::Extension> out;
  auto off = extension_offset_for(msg);
  if (!off) return out;
  try {
    for (auto& e : wire::decode_extensions(ByteView(msg.payload).subspan(*off))) {
      if (e.type == wire::kExtSpxRequest || e.type == wire::kExtSpxResponse) out.push_back(std::move(e));
    }
  } catch (const Error&) {
  }
  return out;
}

}  // namespace

std::size_t spx_payload_bytes(const WireMessage& msg) {
  if (msg.spx_internal()) return msg.payload.size();
  std::size_t n = 0;
  for (const auto& e : spx_extensions(msg)) n += e.value.size();
  return n;
}

std::size_t spx_framing_bytes(const WireMessage& msg) {
  if (msg.spx_internal()) return wire::kHeaderLen;
  return spx_extensions(msg).size() * wire::kExtHeaderLen;
}

// ---------------------------------------------------------------------------
// Grant

Bytes GrantContext::encode() const {
  Bytes out;
  append(out, view("spx-grant"));
  append(out, nonce);
  append(out, edge_public);
  append(out, server_public);
  return out;
}

crypto::SymmetricKey grant_key(const Key32& shared_secret, const GrantContext& ctx) {
  crypto::SymmetricKey k;
  k.bytes = crypto::hkdf(shared_secret, ctx.encode(), 1)[0];
  return k;
}

Bytes seal_grant(const crypto::SymmetricKey& key, ByteView material, std::size_t grant_size,
                 const GrantContext& ctx) {
  if (grant_size < material.size() + crypto::kTagLen) {
    throw Error(ErrorCode::Config, "grant size " + std::to_string(grant_size) + " below minimum " +
                                       std::to_string(material.size() + crypto::kTagLen));
  }
  Bytes plain(material.begin(), material.end());
  plain.resize(grant_size - crypto::kTagLen, 0);
  return crypto::aead_seal(key, crypto::counter_nonce(0), ctx.encode(), plain);
}

Bytes open_grant(const crypto::SymmetricKey& key, ByteView ciphertext, const GrantContext& ctx) {
  auto plain = crypto::aead_open(key, crypto::counter_nonce(0), ctx.encode(), ciphertext);
  if (plain.size() < kGrantMaterialLen) throw Error(ErrorCode::Truncated, "grant material");
  if (std::any_of(plain.begin() + kGrantMaterialLen, plain.end(), [](std::uint8_t b) { return b != 0; })) {
    throw Error(ErrorCode::ProtocolViolation, "grant padding not zero");
  }
  plain.resize(kGrantMaterialLen);
  return plain;
}

// ---------------------------------------------------------------------------
// Binders

WireMessage EnclaveBinder::make_bind(const see::AttestNonce& nonce, const Key32& server_public) {
  ephemeral_ = enclave_.mint_ephemeral();
  minted_ = true;
  ctx_ = {nonce, ephemeral_, server_public};
  auto report = enclave_.attest(ephemeral_, nonce);
  return wire::make(MsgType::SpxAttestation, report.serialize(), wire::kFlagSpxInternal);
}

Bytes EnclaveBinder::open_grant(ByteView grant_payload) {
  if (!minted_) throw Error(ErrorCode::ProtocolViolation, "grant before bind");
  auto secret = enclave_.ephemeral_dh(ephemeral_, ctx_.server_public);
  return core::open_grant(grant_key(secret, ctx_), grant_payload, ctx_);
}

void EnclaveBinder::finish() {
  if (minted_) enclave_.erase_ephemeral(ephemeral_);
}

StrawmanBinder::StrawmanBinder(see::Enclave& enclave, BindingMode mode, std::string identity, crypto::Drbg& rng)
    : enclave_(enclave), mode_(mode), identity_(std::move(identity)), channel_(crypto::KeyPair::generate(rng)) {}

WireMessage StrawmanBinder::make_bind(const see::AttestNonce& nonce, const Key32& server_public) {
  ctx_ = {nonce, channel_.public_key, server_public};
  Bytes payload;
  if (mode_ == BindingMode::AttestAfterConnect) {
    payload = bind_payload_after_connect(enclave_.attest_unbound(nonce), channel_.public_key);
  } else {
    payload = bind_payload_before_connect(identity_, channel_.public_key);
  }
  return wire::make(MsgType::SpxAttestation, std::move(payload), wire::kFlagSpxInternal);
}

Bytes StrawmanBinder::open_grant(ByteView grant_payload) {
  auto secret = crypto::dh(channel_, ctx_.server_public);
  return core::open_grant(grant_key(secret, ctx_), grant_payload, ctx_);
}

Bytes bind_payload_after_connect(const see::AttestationReport& unbound_report, const Key32& channel_public) {
  Bytes out = unbound_report.serialize();
  append(out, channel_public);
  return out;
}

Bytes bind_payload_before_connect(std::string_view identity, const Key32& channel_public) {
  Bytes out;
  out.push_back(static_cast<std::uint8_t>(identity.size()));
  append(out, view(identity));
  append(out, channel_public);
  return out;
}

void EdgeRegistry::add(std::string identity) {
  std::lock_guard lock(mu_);
  ids_.insert(std::move(identity));
}

bool EdgeRegistry::contains(const std::string& identity) const {
  std::lock_guard lock(mu_);
  return ids_.contains(identity);
}

bool register_edge(const ServerSpxConfig& cfg, const std::string& identity,
                   const see::AttestationReport& report, const see::AttestNonce& issued_nonce) {
  if (!cfg.registry) return false;
  if (!see::verify_report(report, cfg.expected_edge_measurement, issued_nonce, cfg.trusted_platform)) return false;
  cfg.registry->add(identity);
  return true;
}

// ---------------------------------------------------------------------------
// Server half

ServerBinding::ServerBinding(const ServerSpxConfig& cfg, const crypto::SigningKey& report_signer, crypto::Drbg& rng)
    : cfg_(cfg), signer_(report_signer), ephemeral_(crypto::KeyPair::generate(rng)) {
  rng.fill(nonce_);
}

Bytes ServerBinding::respond() {
  if (!cfg_.capable) return {};
  return see::make_report(cfg_.server_measurement, ephemeral_.public_key, nonce_, signer_).serialize();
}

void ServerBinding::accept_bind(const WireMessage& attestation) {
  if (attestation.type != MsgType::SpxAttestation || !attestation.spx_internal()) {
    throw Error(ErrorCode::ProtocolViolation, "expected SPX attestation frame");
  }
  if (bound_) throw Error(ErrorCode::ProtocolViolation, "duplicate attestation");
  auto reject = [](std::string_view why) { throw Error(ErrorCode::AttestationInvalid, std::string(why)); };
  ByteView p = attestation.payload;
  switch (cfg_.mode) {
    case BindingMode::Spx: {
      auto report = see::AttestationReport::parse(p);
      auto v = see::verify_report(report, cfg_.expected_edge_measurement, nonce_, cfg_.trusted_platform);
      if (!v) reject(see::to_string(v.reason));
      edge_public_ = report.ephemeral_public;
      break;
    }
    case BindingMode::AttestAfterConnect: {
      if (p.size() != see::kReportSize + 32) reject("bad after-connect payload size");
      auto report = see::AttestationReport::parse(p.first(see::kReportSize));
      auto v = see::verify_report(report, cfg_.expected_edge_measurement, nonce_, cfg_.trusted_platform);
      if (!v) reject(see::to_string(v.reason));
      edge_public_ = to_array<32>(p.subspan(see::kReportSize));
      break;
    }
    case BindingMode::AttestBeforeConnect: {
      Reader r(p);
      auto len = r.u8();
      auto id = r.take(len);
      edge_public_ = r.array<32>();
      if (!r.empty()) reject("trailing bytes");
      if (!cfg_.registry || !cfg_.registry->contains(std::string(id.begin(), id.end()))) {
        reject("edge identity not registered");
      }
      break;
    }
  }
  bound_ = true;
}

WireMessage ServerBinding::make_grant(ByteView material) {
  if (!bound_) throw Error(ErrorCode::ProtocolViolation, "grant before verified attestation");
  GrantContext ctx{nonce_, edge_public_, ephemeral_.public_key};
  auto key = grant_key(crypto::dh(ephemeral_, edge_public_), ctx);
  return wire::make(MsgType::SpxGrant, seal_grant(key, material, cfg_.grant_size, ctx), wire::kFlagSpxInternal);
}

// ---------------------------------------------------------------------------
// Edge state machine

SpxEdgeState::SpxEdgeState(const EdgeConfig& cfg, std::unique_ptr<Binder> binder, see::Enclave* enclave,
                           ChannelId channel, std::string session_id)
    : cfg_(cfg),
      binder_(std::move(binder)),
      enclave_(enclave),
      channel_(channel),
      session_id_(std::move(session_id)) {}

void SpxEdgeState::set_phase(Phase p) {
  if (phase_ == p) return;
  phase_ = p;
  history_.push_back(p);
}

void SpxEdgeState::abort(const std::string& reason) {
  if (abort_reason_.empty()) abort_reason_ = reason;
  set_phase(Phase::Aborted);
  if (binder_) binder_->finish();
}

SpxEdgeState::DetectResult SpxEdgeState::detect(const WireMessage& first) {
  if (phase_ != Phase::Idle) throw Error(ErrorCode::ProtocolViolation, "detect outside Idle");
  for (const auto& factory : cfg_.adapters) {
    if (auto a = factory(first)) {
      adapter_ = std::move(a);
      set_phase(Phase::Detected);
      return DetectResult::Detected;
    }
  }
  pass_through_ = true;
  return DetectResult::PassThrough;
}

void SpxEdgeState::expect(const WireMessage& msg, Direction dir) {
  const auto& seq = adapter_->sequence();
  if (step_ >= seq.size() || seq[step_].dir != dir || seq[step_].type != msg.type) {
    auto what = std::string("unexpected ") + std::string(wire::name(msg.type)) + " at step " +
                std::to_string(step_);
    abort(what);
    throw Error(ErrorCode::ProtocolViolation, what);
  }
}

RelayOutput SpxEdgeState::relay(const WireMessage& msg, Direction dir) {
  if (pass_through_) return {msg, false};
  if (phase_ == Phase::Idle && dir == Direction::ClientToServer) {
    if (detect(msg) == DetectResult::PassThrough) return {msg, false};
  }
  if (phase_ == Phase::Idle || phase_ == Phase::Aborted) {
    throw Error(ErrorCode::ProtocolViolation, std::string("relay in phase ") + std::string(to_string(phase_)));
  }
  if (dir == Direction::ServerToClient) {
    auto fwd = forward(msg);
    return {fwd, bind_due()};
  }
  if (msg.spx_internal()) throw Error(ErrorCode::ProtocolViolation, "client sent an SPX-internal frame");
  expect(msg, dir);
  RelayOutput out;
  try {
    adapter_->observe(msg, dir);
  } catch (const Error& e) {
    abort(e.what());
    throw;
  }
  out.forward = msg;
  if (step_ == 0) {
    out.forward = embed_request(msg, adapter_->extension_offset(msg));
    set_phase(Phase::Relaying);
  }
  ++step_;
  out.bind_now = bind_due();
  return out;
}

std::optional<WireMessage> SpxEdgeState::forward(const WireMessage& server_msg) {
  if (pass_through_) return server_msg;
  if (server_msg.spx_internal()) return std::nullopt;
  if (!adapter_ || phase_ == Phase::Idle || phase_ == Phase::Aborted) return server_msg;
  if (step_ >= adapter_->sequence().size() && phase_ == Phase::Established) return server_msg;
  expect(server_msg, Direction::ServerToClient);
  WireMessage out = server_msg;
  if (step_ == 1) {
    auto s = strip_extensions(server_msg, adapter_->extension_offset(server_msg));
    out = s.msg;
    bool capable = false;
    if (s.response && !s.response->empty()) {
      try {
        auto report = see::AttestationReport::parse(*s.response);
        if (crypto::verify(cfg_.server_pin, report.signed_body(), report.signature)) {
          server_nonce_ = report.nonce;
          server_public_ = report.ephemeral_public;
          capable = true;
        }
      } catch (const Error&) {
      }
    }
    if (!capable) {
      // Not capable (or response not trusted): relay the rest opaquely.
      abort(s.response ? "server response not accepted" : "server not SPX-capable");
      pass_through_ = true;
      ++step_;
      return out;
    }
  }
  try {
    adapter_->observe(out, Direction::ServerToClient);
  } catch (const Error& e) {
    abort(e.what());
    throw;
  }
  ++step_;
  return out;
}

WireMessage SpxEdgeState::bind() {
  if (!server_nonce_) {
    throw Error(ErrorCode::NoNonce, "server issued no SPX nonce");
  }
  if (phase_ != Phase::Relaying) {
    throw Error(ErrorCode::ProtocolViolation, std::string("bind in phase ") + std::string(to_string(phase_)));
  }
  auto frame = binder_->make_bind(*server_nonce_, server_public_);
  set_phase(Phase::Bound);
  return frame;
}

SpxSession SpxEdgeState::grant_accept(const WireMessage& grant, ChannelId arrived_on) {
  if (phase_ != Phase::Bound) {
    auto what = std::string("grant in phase ") + std::string(to_string(phase_));
    abort(what);
    throw Error(ErrorCode::ProtocolViolation, what);
  }
  const auto& seq = adapter_->sequence();
  for (std::size_t i = step_; i < seq.size(); ++i) {
    if (seq[i].dir == Direction::ClientToServer) {
      abort("grant before the client finished its handshake");
      throw Error(ErrorCode::ProtocolViolation, "grant before the client finished its handshake");
    }
  }
  if (grant.type != MsgType::SpxGrant || !grant.spx_internal()) {
    abort("malformed grant frame");
    throw Error(ErrorCode::ProtocolViolation, "malformed grant frame");
  }
  if (arrived_on != channel_) {
    abort("grant arrived on a foreign channel");
    throw Error(ErrorCode::ProtocolViolation, "grant arrived on channel " + std::to_string(arrived_on) +
                                                  ", bound to " + std::to_string(channel_));
  }
  Bytes material;
  try {
    material = binder_->open_grant(grant.payload);
  } catch (const Error& e) {
    abort(e.what());
    throw;
  }
  auto session = adapter_->make_session(material, session_id_);
  session.client_id = cfg_.edge_id;
  session.server_id = cfg_.server_id;
  std::fill(material.begin(), material.end(), 0);
  set_phase(Phase::Granted);
  if (enclave_) enclave_->session_put(session);
  binder_->finish();
  set_phase(Phase::Established);
  return session;
}

ResumeResult SpxEdgeState::resume(ByteView) const { return ResumeResult::Unsupported; }

}  // namespace spx::core
