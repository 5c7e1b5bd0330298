#include "spx/tlx.hpp"

namespace spx::tlx {

using wire::MsgType;
using wire::WireMessage;

namespace {

[[noreturn]] void violation(const std::string& what) { throw Error(ErrorCode::ProtocolViolation, what); }

void expect_type(const WireMessage& msg, MsgType want) {
  if (msg.type != want) {
    violation("expected " + std::string(wire::name(want)) + ", got " + std::string(wire::name(msg.type)));
  }
}

}  // namespace

Bytes Hello::encode() const {
  Bytes out(random.begin(), random.end());
  put_u16(out, suite);
  append(out, wire::encode_extensions(extensions));
  return out;
}

Hello Hello::parse(ByteView payload) {
  Reader r(payload);
  Hello h;
  h.random = r.array<kRandomLen>();
  h.suite = r.u16();
  h.extensions = wire::decode_extensions(r.rest());
  return h;
}

Bytes Certificate::signed_body() const {
  Bytes out;
  put_u16(out, static_cast<std::uint16_t>(subject.size()));
  append(out, view(subject));
  append(out, public_key);
  put_u16(out, static_cast<std::uint16_t>(padding.size()));
  append(out, padding);
  return out;
}

Bytes Certificate::encode() const {
  Bytes out = signed_body();
  append(out, signature.bytes);
  return out;
}

Certificate Certificate::parse(ByteView payload) {
  Reader r(payload);
  Certificate c;
  auto n = r.u16();
  auto subj = r.take(n);
  c.subject.assign(subj.begin(), subj.end());
  c.public_key = r.array<32>();
  auto pad = r.take(r.u16());
  c.padding.assign(pad.begin(), pad.end());
  c.signature.bytes = r.array<crypto::kSignatureLen>();
  c.signature.signer = c.public_key;
  if (!r.empty()) violation("trailing certificate bytes");
  return c;
}

bool Certificate::self_signed() const { return crypto::verify(public_key, signed_body(), signature); }

Certificate make_certificate(const std::string& subject, const crypto::SigningKey& key, std::size_t total_size) {
  Certificate c;
  c.subject = subject;
  c.public_key = key.public_key;
  std::size_t fixed = 2 + subject.size() + 32 + 2 + crypto::kSignatureLen;
  if (total_size < fixed) throw Error(ErrorCode::Config, "certificate size too small");
  c.padding.assign(total_size - fixed, 0xc5);
  c.signature = crypto::sign(key, c.signed_body());
  return c;
}

Bytes ServerKeyExchange::encode() const {
  Bytes out(dh_public.begin(), dh_public.end());
  append(out, signature.bytes);
  return out;
}

ServerKeyExchange ServerKeyExchange::parse(ByteView payload) {
  Reader r(payload);
  ServerKeyExchange s;
  s.dh_public = r.array<32>();
  s.signature.bytes = r.array<crypto::kSignatureLen>();
  if (!r.empty()) violation("trailing key exchange bytes");
  return s;
}

Bytes ske_signed_body(const Hello& client, const Hello& server, const Key32& dh_public) {
  Bytes out(client.random.begin(), client.random.end());
  append(out, server.random);
  append(out, dh_public);
  return out;
}

Keys derive_keys(const Key32& dh_secret, const Hello& client, const Hello& server) {
  Bytes randoms(client.random.begin(), client.random.end());
  append(randoms, server.random);
  auto out = crypto::hkdf(dh_secret, randoms, 2);
  Keys k;
  k.session_key.bytes = out[0];
  k.master = out[1];
  return k;
}

Bytes finished_data(const Key32& master, std::string_view label, const crypto::Digest& transcript) {
  Bytes msg(label.begin(), label.end());
  append(msg, transcript);
  return to_bytes(crypto::hmac(master, msg));
}

WireMessage RecordLayer::seal(ByteView plaintext) {
  std::uint8_t aad = static_cast<std::uint8_t>(MsgType::ApplicationData);
  return wire::make(MsgType::ApplicationData,
                    crypto::aead_seal(key_, crypto::counter_nonce(send_seq_++, send_dir_), ByteView(&aad, 1), plaintext));
}

Bytes RecordLayer::open(const WireMessage& record) {
  expect_type(record, MsgType::ApplicationData);
  std::uint8_t aad = static_cast<std::uint8_t>(record.type);
  return crypto::aead_open(key_, crypto::counter_nonce(recv_seq_++, recv_dir_), ByteView(&aad, 1), record.payload);
}

Credentials Credentials::generate(crypto::Drbg& rng, const std::string& subject, std::size_t cert_size) {
  Credentials c;
  c.key = crypto::SigningKey::generate(rng);
  c.certificate = make_certificate(subject, c.key, cert_size);
  return c;
}

// ---------------------------------------------------------------------------
// Client

ClientCore::ClientCore(ClientConfig cfg) : cfg_(cfg), rng_(cfg.seed) {}

Outputs ClientCore::start() {
  if (state_ != State::Start) violation("client already started");
  rng_.fill(client_hello_.random);
  auto ch = wire::make(MsgType::ClientHello, client_hello_.encode());
  absorb(ch);
  state_ = State::WaitServerHello;
  return {ch};
}

Outputs ClientCore::on_message(const WireMessage& msg) {
  if (msg.flags != 0) violation("unexpected frame flags");
  if (msg.type == MsgType::Alert) throw Error(ErrorCode::ProtocolViolation, "server alert");
  switch (state_) {
    case State::WaitServerHello: {
      expect_type(msg, MsgType::ServerHello);
      server_hello_ = Hello::parse(msg.payload);
      if (!server_hello_.extensions.empty()) violation("unsolicited ServerHello extension");
      if (server_hello_.suite != kSuite) violation("unsupported suite");
      absorb(msg);
      state_ = State::WaitCertificate;
      return {};
    }
    case State::WaitCertificate: {
      expect_type(msg, MsgType::Certificate);
      cert_ = Certificate::parse(msg.payload);
      if (!cert_.self_signed()) throw Error(ErrorCode::CertMismatch, "certificate signature invalid");
      if (cfg_.pin && cert_.public_key != *cfg_.pin) throw Error(ErrorCode::CertMismatch, "certificate key not pinned");
      absorb(msg);
      state_ = State::WaitKeyExchange;
      return {};
    }
    case State::WaitKeyExchange: {
      expect_type(msg, MsgType::ServerKeyExchange);
      ske_ = ServerKeyExchange::parse(msg.payload);
      if (!crypto::verify(cert_.public_key, ske_signed_body(client_hello_, server_hello_, ske_.dh_public),
                          ske_.signature)) {
        throw Error(ErrorCode::CertMismatch, "key exchange not signed by certificate key");
      }
      absorb(msg);
      state_ = State::WaitHelloDone;
      return {};
    }
    case State::WaitHelloDone: {
      expect_type(msg, MsgType::ServerHelloDone);
      absorb(msg);
      auto eph = crypto::KeyPair::generate(rng_);
      keys_ = derive_keys(crypto::dh(eph, ske_.dh_public), client_hello_, server_hello_);
      Outputs out;
      out.push_back(wire::make(MsgType::ClientKeyExchange, to_bytes(eph.public_key)));
      out.push_back(wire::make(MsgType::ChangeCipherSpec, Bytes{1}));
      absorb(out[0]);
      absorb(out[1]);
      out.push_back(wire::make(MsgType::Finished, finished_data(keys_.master, "client finished", transcript_.digest())));
      absorb(out[2]);
      state_ = State::WaitCcs;
      return out;
    }
    case State::WaitCcs: {
      expect_type(msg, MsgType::ChangeCipherSpec);
      absorb(msg);
      state_ = State::WaitFinished;
      return {};
    }
    case State::WaitFinished: {
      expect_type(msg, MsgType::Finished);
      if (msg.payload != finished_data(keys_.master, "server finished", transcript_.digest())) {
        throw Error(ErrorCode::FinishedMismatch, "server Finished does not verify");
      }
      absorb(msg);
      records_.emplace(keys_.session_key, kClientDir, kServerDir);
      complete_ = true;
      state_ = State::Done;
      return {};
    }
    case State::Start:
    case State::Done:
      break;
  }
  violation("unexpected " + std::string(wire::name(msg.type)));
}

// ---------------------------------------------------------------------------
// Server

ServerCore::ServerCore(ServerConfig cfg) : cfg_(cfg), rng_(cfg.seed) {
  if (!cfg_.credentials) throw Error(ErrorCode::Config, "server needs credentials");
}

Outputs ServerCore::on_message(const WireMessage& msg) {
  if (msg.type == MsgType::SpxAttestation) {
    if (!binding_) violation("attestation without SPX request");
    binding_->accept_bind(msg);
    return maybe_finish();
  }
  if (msg.spx_internal()) violation("unexpected SPX frame");
  switch (state_) {
    case State::WaitClientHello: {
      expect_type(msg, MsgType::ClientHello);
      auto stripped = core::strip_extensions(msg, kHelloFixedLen);
      client_hello_ = Hello::parse(stripped.msg.payload);
      if (client_hello_.suite != kSuite) violation("unsupported suite");
      absorb(stripped.msg);
      rng_.fill(server_hello_.random);
      dh_ = crypto::KeyPair::generate(rng_);
      Hello visible = server_hello_;
      if (stripped.had_request && cfg_.spx) {
        binding_.emplace(*cfg_.spx, cfg_.credentials->key, rng_);
        server_hello_.extensions.push_back({wire::kExtSpxResponse, binding_->respond()});
      }
      Outputs out;
      out.push_back(wire::make(MsgType::ServerHello, server_hello_.encode()));
      absorb(wire::make(MsgType::ServerHello, visible.encode()));
      out.push_back(wire::make(MsgType::Certificate, cfg_.credentials->certificate.encode()));
      ServerKeyExchange ske;
      ske.dh_public = dh_.public_key;
      ske.signature = crypto::sign(cfg_.credentials->key, ske_signed_body(client_hello_, visible, dh_.public_key));
      out.push_back(wire::make(MsgType::ServerKeyExchange, ske.encode()));
      out.push_back(wire::make(MsgType::ServerHelloDone, {}));
      for (std::size_t i = 1; i < out.size(); ++i) absorb(out[i]);
      state_ = State::WaitKeyExchange;
      return out;
    }
    case State::WaitKeyExchange: {
      expect_type(msg, MsgType::ClientKeyExchange);
      auto client_pub = to_array<32>(msg.payload);
      keys_ = derive_keys(crypto::dh(dh_, client_pub), client_hello_, server_hello_);
      absorb(msg);
      state_ = State::WaitCcs;
      return {};
    }
    case State::WaitCcs: {
      expect_type(msg, MsgType::ChangeCipherSpec);
      absorb(msg);
      state_ = State::WaitFinished;
      return {};
    }
    case State::WaitFinished: {
      expect_type(msg, MsgType::Finished);
      if (msg.payload != finished_data(keys_.master, "client finished", transcript_.digest())) {
        throw Error(ErrorCode::FinishedMismatch, "client Finished does not verify");
      }
      absorb(msg);
      client_finished_ = true;
      return maybe_finish();
    }
    case State::Done:
      break;
  }
  violation("unexpected " + std::string(wire::name(msg.type)));
}

Outputs ServerCore::maybe_finish() {
  if (!client_finished_ || state_ == State::Done) return {};
  if (binding_ && cfg_.spx->capable && !binding_->bound()) return {};
  Outputs out;
  if (binding_ && binding_->bound()) {
    out.push_back(binding_->make_grant(keys_.session_key.bytes));
    granted_ = true;
  }
  auto ccs = wire::make(MsgType::ChangeCipherSpec, Bytes{1});
  absorb(ccs);
  out.push_back(ccs);
  auto fin = wire::make(MsgType::Finished, finished_data(keys_.master, "server finished", transcript_.digest()));
  absorb(fin);
  out.push_back(fin);
  records_.emplace(keys_.session_key, kServerDir, kClientDir);
  complete_ = true;
  state_ = State::Done;
  return out;
}

// ---------------------------------------------------------------------------
// Edge adapter

const std::vector<core::Step>& EdgeAdapter::sequence() const {
  using core::Direction;
  static const std::vector<core::Step> seq = {
      {Direction::ClientToServer, MsgType::ClientHello},
      {Direction::ServerToClient, MsgType::ServerHello},
      {Direction::ServerToClient, MsgType::Certificate},
      {Direction::ServerToClient, MsgType::ServerKeyExchange},
      {Direction::ServerToClient, MsgType::ServerHelloDone},
      {Direction::ClientToServer, MsgType::ClientKeyExchange},
      {Direction::ClientToServer, MsgType::ChangeCipherSpec},
      {Direction::ClientToServer, MsgType::Finished},
      {Direction::ServerToClient, MsgType::ChangeCipherSpec},
      {Direction::ServerToClient, MsgType::Finished},
  };
  return seq;
}

void EdgeAdapter::observe(const WireMessage& msg, core::Direction) {
  switch (msg.type) {
    case MsgType::ClientHello:
      client_hello_ = Hello::parse(msg.payload);
      break;
    case MsgType::ServerHello:
      server_hello_ = Hello::parse(msg.payload);
      suite_ = server_hello_.suite;
      break;
    case MsgType::Certificate: {
      auto cert = Certificate::parse(msg.payload);
      if (!cert.self_signed() || cert.public_key != pin_) {
        throw Error(ErrorCode::CertMismatch, "server certificate is not the pinned server");
      }
      cert_key_ = cert.public_key;
      break;
    }
    case MsgType::ServerKeyExchange: {
      auto ske = ServerKeyExchange::parse(msg.payload);
      if (!crypto::verify(cert_key_, ske_signed_body(client_hello_, server_hello_, ske.dh_public), ske.signature)) {
        throw Error(ErrorCode::CertMismatch, "key exchange not signed by pinned server");
      }
      break;
    }
    default:
      break;
  }
  transcript_ = transcript_.absorb(msg);
}

SpxSession EdgeAdapter::make_session(ByteView key_material, const std::string& session_id) const {
  SpxSession s;
  s.session_id = session_id;
  s.protocol = ProtocolId::Tlx;
  s.session_key.bytes = to_array<32>(key_material);
  return s;
}

std::unique_ptr<core::RecordService> EdgeAdapter::make_service(const SpxSession& session) const {
  return std::make_unique<EchoService>(session.session_key);
}

core::AdapterFactory adapter_factory(const Key32& server_pin) {
  return [server_pin](const WireMessage& first) -> std::unique_ptr<core::ProtocolAdapter> {
    if (first.type != MsgType::ClientHello || first.spx_internal()) return nullptr;
    try {
      if (Hello::parse(first.payload).suite != kSuite) return nullptr;
    } catch (const Error&) {
      return nullptr;
    }
    return std::make_unique<EdgeAdapter>(server_pin);
  };
}

std::vector<WireMessage> EchoService::on_client(const WireMessage& msg) {
  auto plain = records_.open(msg);
  return {records_.seal(plain)};
}

}  // namespace spx::tlx
