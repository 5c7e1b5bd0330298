#pragma once

// Protocol endpoints as Peers: clients with an echo workload, servers,
// the SPX edge and the split-proxy baseline edge, for TLX and NoiXe.

#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "spx/noise.hpp"
#include "spx/peer.hpp"
#include "spx/see.hpp"
#include "spx/spx_core.hpp"
#include "spx/tlx.hpp"

namespace spx::net {

struct Workload {
  std::size_t bytes = 0;
  // 0 selects the protocol default (TLX 1 KB records, Noise 65519-byte messages).
  std::size_t block = 0;
  std::size_t window = 16;
  std::uint64_t seed = 7;
};

// Client side of the echo application: sends `bytes` of deterministic data
// in blocks and checks that every echoed block is bit-exact.
class EchoDriver {
 public:
  EchoDriver(const Workload& w, std::size_t default_block);
  std::vector<Bytes> pull();
  void on_echo(ByteView data);
  bool done() const { return received_ == data_.size(); }
  std::size_t bytes_echoed() const { return received_; }

 private:
  Bytes data_;
  std::size_t block_;
  std::size_t window_;
  std::size_t sent_ = 0;
  std::size_t received_ = 0;
  std::size_t outstanding_ = 0;
};

struct Observed {
  wire::MsgType type;
  bool from_client;
  friend bool operator==(const Observed&, const Observed&) = default;
};

class ClientPeer : public Peer {
 public:
  explicit ClientPeer(Workload w) : workload_(w) {}
  void start(Io& io) override;
  void receive(Port from, const Frame& frame, Io& io) override;
  PeerStatus status() const override { return status_; }
  bool handshake_complete() const override { return core_complete(); }
  std::string error() const override { return error_; }
  // Handshake frames as seen by the client, in order.
  const std::vector<Observed>& observed() const { return observed_; }
  std::size_t bytes_echoed() const { return echo_ ? echo_->bytes_echoed() : 0; }

 protected:
  virtual std::vector<wire::WireMessage> core_start() = 0;
  virtual std::vector<wire::WireMessage> core_on(const wire::WireMessage& msg) = 0;
  virtual bool core_complete() const = 0;
  virtual wire::WireMessage seal(ByteView plaintext) = 0;
  virtual Bytes open(const wire::WireMessage& msg) = 0;
  virtual std::size_t default_block() const = 0;

 private:
  void emit(Io& io, std::vector<wire::WireMessage> out);
  void pump(Io& io);

  Workload workload_;
  std::optional<EchoDriver> echo_;
  std::vector<Observed> observed_;
  PeerStatus status_ = PeerStatus::Running;
  std::string error_;
};

class TlxClientPeer : public ClientPeer {
 public:
  TlxClientPeer(tlx::ClientConfig cfg, Workload w) : ClientPeer(w), core_(cfg) {}
  const tlx::ClientCore& core() const { return core_; }

 protected:
  std::vector<wire::WireMessage> core_start() override { return core_.start(); }
  std::vector<wire::WireMessage> core_on(const wire::WireMessage& m) override { return core_.on_message(m); }
  bool core_complete() const override { return core_.complete(); }
  wire::WireMessage seal(ByteView p) override { return core_.records().seal(p); }
  Bytes open(const wire::WireMessage& m) override { return core_.records().open(m); }
  std::size_t default_block() const override { return tlx::kBlockSize; }

 private:
  tlx::ClientCore core_;
};

class NoiseClientPeer : public ClientPeer {
 public:
  NoiseClientPeer(noise::InitiatorConfig cfg, Workload w) : ClientPeer(w), core_(std::move(cfg)) {}
  const noise::InitiatorCore& core() const { return core_; }

 protected:
  std::vector<wire::WireMessage> core_start() override { return core_.start(); }
  std::vector<wire::WireMessage> core_on(const wire::WireMessage& m) override { return core_.on_message(m); }
  bool core_complete() const override { return core_.complete(); }
  wire::WireMessage seal(ByteView p) override { return core_.seal(p); }
  Bytes open(const wire::WireMessage& m) override { return core_.open(m); }
  std::size_t default_block() const override { return noise::kMaxPlaintext; }

 private:
  noise::InitiatorCore core_;
};

// Server: runs the handshake on Down and echoes application data.
class ServerPeer : public Peer {
 public:
  void receive(Port from, const Frame& frame, Io& io) override;
  PeerStatus status() const override { return status_; }
  bool handshake_complete() const override { return core_complete(); }
  std::string error() const override { return error_; }
  std::size_t records_echoed() const { return echoed_; }

 protected:
  virtual std::vector<wire::WireMessage> core_on(const wire::WireMessage& msg) = 0;
  virtual bool core_complete() const = 0;
  virtual bool is_record(const wire::WireMessage& msg) const = 0;
  virtual wire::WireMessage echo(const wire::WireMessage& msg) = 0;

 private:
  PeerStatus status_ = PeerStatus::Running;
  std::string error_;
  std::size_t echoed_ = 0;
};

class TlxServerPeer : public ServerPeer {
 public:
  explicit TlxServerPeer(tlx::ServerConfig cfg) : core_(cfg) {}
  const tlx::ServerCore& core() const { return core_; }

 protected:
  std::vector<wire::WireMessage> core_on(const wire::WireMessage& m) override { return core_.on_message(m); }
  bool core_complete() const override { return core_.complete(); }
  bool is_record(const wire::WireMessage& m) const override { return m.type == wire::MsgType::ApplicationData; }
  wire::WireMessage echo(const wire::WireMessage& m) override { return core_.records().seal(core_.records().open(m)); }

 private:
  tlx::ServerCore core_;
};

class NoiseServerPeer : public ServerPeer {
 public:
  explicit NoiseServerPeer(noise::ResponderConfig cfg) : core_(std::move(cfg)) {}
  const noise::ResponderCore& core() const { return core_; }

 protected:
  std::vector<wire::WireMessage> core_on(const wire::WireMessage& m) override { return core_.on_message(m); }
  bool core_complete() const override { return core_.complete(); }
  bool is_record(const wire::WireMessage& m) const override { return m.type == wire::MsgType::NoiseTransport; }
  wire::WireMessage echo(const wire::WireMessage& m) override { return core_.seal(core_.open(m)); }

 private:
  noise::ResponderCore core_;
};

// SPX edge function for one client connection.
class SpxEdgePeer : public Peer {
 public:
  SpxEdgePeer(const core::EdgeConfig& cfg, std::unique_ptr<core::Binder> binder, see::Enclave* enclave,
              core::ChannelId channel, std::string session_id);
  void receive(Port from, const Frame& frame, Io& io) override;
  PeerStatus status() const override { return status_; }
  bool handshake_complete() const override { return state_.phase() == core::Phase::Established; }
  std::string error() const override { return error_; }
  const core::SpxEdgeState& state() const { return state_; }
  const std::optional<SpxSession>& session() const { return session_; }

 private:
  void from_client(const Frame& frame, Io& io);
  void from_server(const Frame& frame, Io& io);
  void serve(const wire::WireMessage& msg, Io& io);
  void fail(const std::string& what, Io& io);

  core::SpxEdgeState state_;
  see::Enclave* enclave_;
  std::unique_ptr<core::RecordService> service_;
  std::optional<SpxSession> session_;
  std::deque<wire::WireMessage> pending_;
  PeerStatus status_ = PeerStatus::Running;
  std::string error_;
};

// Split-proxy baseline: terminates the client's session with installed
// credentials and runs its own handshake to the server, started by the
// client's first message.
class SplitEdgePeer : public Peer {
 public:
  void receive(Port from, const Frame& frame, Io& io) override;
  PeerStatus status() const override { return status_; }
  bool handshake_complete() const override { return down_complete() && up_complete(); }
  std::string error() const override { return error_; }

 protected:
  virtual std::vector<wire::WireMessage> down_on(const wire::WireMessage& m) = 0;
  virtual bool down_complete() const = 0;
  virtual bool down_is_record(const wire::WireMessage& m) const = 0;
  virtual wire::WireMessage down_echo(const wire::WireMessage& m) = 0;
  virtual std::vector<wire::WireMessage> up_start() = 0;
  virtual std::vector<wire::WireMessage> up_on(const wire::WireMessage& m) = 0;
  virtual bool up_complete() const = 0;

 private:
  bool up_started_ = false;
  PeerStatus status_ = PeerStatus::Running;
  std::string error_;
};

class TlxSplitEdgePeer : public SplitEdgePeer {
 public:
  TlxSplitEdgePeer(tlx::ServerConfig down, tlx::ClientConfig up) : down_(down), up_(up) {}

 protected:
  std::vector<wire::WireMessage> down_on(const wire::WireMessage& m) override { return down_.on_message(m); }
  bool down_complete() const override { return down_.complete(); }
  bool down_is_record(const wire::WireMessage& m) const override { return m.type == wire::MsgType::ApplicationData; }
  wire::WireMessage down_echo(const wire::WireMessage& m) override {
    return down_.records().seal(down_.records().open(m));
  }
  std::vector<wire::WireMessage> up_start() override { return up_.start(); }
  std::vector<wire::WireMessage> up_on(const wire::WireMessage& m) override { return up_.on_message(m); }
  bool up_complete() const override { return up_.complete(); }

 private:
  tlx::ServerCore down_;
  tlx::ClientCore up_;
};

class NoiseSplitEdgePeer : public SplitEdgePeer {
 public:
  NoiseSplitEdgePeer(noise::ResponderConfig down, noise::InitiatorConfig up)
      : down_(std::move(down)), up_(std::move(up)) {}

 protected:
  std::vector<wire::WireMessage> down_on(const wire::WireMessage& m) override { return down_.on_message(m); }
  bool down_complete() const override { return down_.complete(); }
  bool down_is_record(const wire::WireMessage& m) const override { return m.type == wire::MsgType::NoiseTransport; }
  wire::WireMessage down_echo(const wire::WireMessage& m) override { return down_.seal(down_.open(m)); }
  std::vector<wire::WireMessage> up_start() override { return up_.start(); }
  std::vector<wire::WireMessage> up_on(const wire::WireMessage& m) override { return up_.on_message(m); }
  bool up_complete() const override { return up_.complete(); }

 private:
  noise::ResponderCore down_;
  noise::InitiatorCore up_;
};

wire::WireMessage alert(std::string_view reason);

}  // namespace spx::net
