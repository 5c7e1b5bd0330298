#include "spx/endpoints.hpp"

namespace spx::net {

using wire::MsgType;
using wire::WireMessage;

WireMessage alert(std::string_view reason) { return wire::make(MsgType::Alert, Bytes(reason.begin(), reason.end())); }

EchoDriver::EchoDriver(const Workload& w, std::size_t default_block)
    : data_(w.bytes), block_(w.block ? w.block : default_block), window_(std::max<std::size_t>(1, w.window)) {
  crypto::Drbg rng(w.seed);
  if (!data_.empty()) rng.fill(data_);
}

std::vector<Bytes> EchoDriver::pull() {
  std::vector<Bytes> out;
  while (outstanding_ < window_ && sent_ < data_.size()) {
    auto n = std::min(block_, data_.size() - sent_);
    out.emplace_back(data_.begin() + static_cast<std::ptrdiff_t>(sent_),
                     data_.begin() + static_cast<std::ptrdiff_t>(sent_ + n));
    sent_ += n;
    ++outstanding_;
  }
  return out;
}

void EchoDriver::on_echo(ByteView data) {
  if (outstanding_ == 0 || received_ + data.size() > sent_ ||
      !std::equal(data.begin(), data.end(), data_.begin() + static_cast<std::ptrdiff_t>(received_))) {
    throw Error(ErrorCode::ProtocolViolation, "echo does not match sent data at offset " + std::to_string(received_));
  }
  received_ += data.size();
  --outstanding_;
}

// ---------------------------------------------------------------------------
// Client

void ClientPeer::emit(Io& io, std::vector<WireMessage> out) {
  for (auto& m : out) {
    observed_.push_back({m.type, true});
    io.send(Port::Up, std::move(m));
  }
}

void ClientPeer::start(Io& io) {
  try {
    emit(io, core_start());
  } catch (const Error& e) {
    status_ = PeerStatus::Aborted;
    error_ = e.what();
  }
}

void ClientPeer::pump(Io& io) {
  if (!echo_) echo_.emplace(workload_, default_block());
  for (auto& block : echo_->pull()) io.send(Port::Up, seal(block));
  if (echo_->done()) status_ = PeerStatus::Done;
}

void ClientPeer::receive(Port, const Frame& frame, Io& io) {
  if (status_ != PeerStatus::Running) return;
  try {
    const auto& msg = frame.msg;
    if (core_complete()) {
      if (msg.type == MsgType::Alert) throw Error(ErrorCode::ProtocolViolation, "peer alert");
      echo_->on_echo(open(msg));
    } else {
      observed_.push_back({msg.type, false});
      emit(io, core_on(msg));
    }
    if (core_complete()) pump(io);
  } catch (const Error& e) {
    status_ = PeerStatus::Aborted;
    error_ = e.what();
  }
}

// ---------------------------------------------------------------------------
// Server

void ServerPeer::receive(Port, const Frame& frame, Io& io) {
  if (status_ != PeerStatus::Running) return;
  try {
    if (core_complete() && is_record(frame.msg)) {
      io.send(Port::Down, echo(frame.msg));
      ++echoed_;
      return;
    }
    if (frame.msg.type == MsgType::Alert) throw Error(ErrorCode::ProtocolViolation, "peer alert");
    for (auto& m : core_on(frame.msg)) io.send(Port::Down, std::move(m));
  } catch (const Error& e) {
    status_ = PeerStatus::Aborted;
    error_ = e.what();
    io.send(Port::Down, alert(e.what()));
  }
}

// ---------------------------------------------------------------------------
// SPX edge

SpxEdgePeer::SpxEdgePeer(const core::EdgeConfig& cfg, std::unique_ptr<core::Binder> binder, see::Enclave* enclave,
                         core::ChannelId channel, std::string session_id)
    : state_(cfg, std::move(binder), enclave, channel, std::move(session_id)), enclave_(enclave) {}

void SpxEdgePeer::fail(const std::string& what, Io& io) {
  if (status_ != PeerStatus::Running) return;
  status_ = PeerStatus::Aborted;
  error_ = what;
  if (state_.phase() != core::Phase::Aborted) state_.abort(what);
  io.send(Port::Down, alert(what));
}

void SpxEdgePeer::receive(Port from, const Frame& frame, Io& io) {
  if (status_ != PeerStatus::Running) return;
  if (state_.pass_through()) {
    io.forward(from == Port::Down ? Port::Up : Port::Down, frame.msg, frame.flight);
    return;
  }
  try {
    if (from == Port::Down) {
      from_client(frame, io);
    } else {
      from_server(frame, io);
    }
  } catch (const Error& e) {
    fail(e.what(), io);
  }
}

void SpxEdgePeer::serve(const WireMessage& msg, Io& io) {
  for (auto& m : service_->on_client(msg)) io.send(Port::Down, std::move(m));
}

void SpxEdgePeer::from_client(const Frame& frame, Io& io) {
  if (state_.handshake_relayed()) {
    if (service_) {
      serve(frame.msg, io);
    } else {
      pending_.push_back(frame.msg);
    }
    return;
  }
  auto out = state_.relay(frame.msg, core::Direction::ClientToServer);
  if (out.forward) io.forward(Port::Up, *out.forward, frame.flight);
  if (out.bind_now) io.send(Port::Up, state_.bind());
}

void SpxEdgePeer::from_server(const Frame& frame, Io& io) {
  const auto& msg = frame.msg;
  if (msg.type == MsgType::Alert && !msg.spx_internal()) {
    io.forward(Port::Down, msg, frame.flight);
    status_ = PeerStatus::Aborted;
    error_ = "server alert: " + std::string(msg.payload.begin(), msg.payload.end());
    state_.abort(error_);
    return;
  }
  if (msg.type == MsgType::SpxGrant) {
    auto granted = state_.grant_accept(msg, state_.channel());
    session_ = enclave_ ? enclave_->session_get(granted.session_id) : granted;
    service_ = state_.adapter()->make_service(*session_);
    while (!pending_.empty()) {
      serve(pending_.front(), io);
      pending_.pop_front();
    }
    return;
  }
  if (msg.spx_internal()) throw Error(ErrorCode::ProtocolViolation, "unexpected SPX frame from server");
  auto out = state_.relay(msg, core::Direction::ServerToClient);
  if (out.forward) io.forward(Port::Down, *out.forward, frame.flight);
  if (out.bind_now) io.send(Port::Up, state_.bind());
}

// ---------------------------------------------------------------------------
// Split edge

void SplitEdgePeer::receive(Port from, const Frame& frame, Io& io) {
  if (status_ != PeerStatus::Running) return;
  try {
    if (from == Port::Down) {
      if (frame.msg.type == MsgType::Alert) throw Error(ErrorCode::ProtocolViolation, "client alert");
      if (!up_started_) {
        up_started_ = true;
        for (auto& m : up_start()) io.send(Port::Up, std::move(m));
      }
      if (down_complete() && down_is_record(frame.msg)) {
        io.send(Port::Down, down_echo(frame.msg));
        return;
      }
      for (auto& m : down_on(frame.msg)) io.send(Port::Down, std::move(m));
    } else {
      if (frame.msg.type == MsgType::Alert) throw Error(ErrorCode::ProtocolViolation, "server alert");
      for (auto& m : up_on(frame.msg)) io.send(Port::Up, std::move(m));
    }
  } catch (const Error& e) {
    status_ = PeerStatus::Aborted;
    error_ = e.what();
    io.send(Port::Down, alert(e.what()));
  }
}

}  // namespace spx::net
