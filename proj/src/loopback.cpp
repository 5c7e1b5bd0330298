#include "spx/loopback.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/resource.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <cstring>
#include <mutex>
#include <thread>

#include "deployment.hpp"

namespace spx::net {

bool LoopbackResult::all_ok() const {
  return !connections.empty() && std::all_of(connections.begin(), connections.end(), [](const auto& c) { return c.ok; });
}

double LoopbackResult::mean_handshake_s() const {
  double sum = 0;
  for (const auto& c : connections) sum += c.handshake_s;
  return connections.empty() ? 0 : sum / static_cast<double>(connections.size());
}

double LoopbackResult::mean_total_s() const {
  double sum = 0;
  for (const auto& c : connections) sum += c.total_s;
  return connections.empty() ? 0 : sum / static_cast<double>(connections.size());
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

double thread_cpu_s() {
  timespec ts{};
  clock_gettime(CLOCK_THREAD_CPUTIME_ID, &ts);
  return static_cast<double>(ts.tv_sec) + static_cast<double>(ts.tv_nsec) * 1e-9;
}

double process_cpu_s() {
  rusage ru{};
  getrusage(RUSAGE_SELF, &ru);
  auto tv = [](const timeval& t) { return static_cast<double>(t.tv_sec) + static_cast<double>(t.tv_usec) * 1e-6; };
  return tv(ru.ru_utime) + tv(ru.ru_stime);
}

[[noreturn]] void sys_fail(const std::string& what) {
  throw Error(ErrorCode::Config, what + ": " + std::strerror(errno));
}

class Fd {
 public:
  Fd() = default;
  explicit Fd(int fd) : fd_(fd) {}
  Fd(Fd&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Fd& operator=(Fd&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  ~Fd() { reset(); }
  int get() const { return fd_; }
  void reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_ = -1;
};

void tune(int fd) {
  int one = 1;
  setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  fcntl(fd, F_SETFL, fcntl(fd, F_GETFL) | O_NONBLOCK);
}

Fd listen_local(std::uint16_t* port) {
  Fd fd(::socket(AF_INET, SOCK_STREAM, 0));
  if (fd.get() < 0) sys_fail("socket");
  int one = 1;
  setsockopt(fd.get(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  if (::bind(fd.get(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) sys_fail("bind");
  if (::listen(fd.get(), 512) < 0) sys_fail("listen");
  socklen_t len = sizeof addr;
  getsockname(fd.get(), reinterpret_cast<sockaddr*>(&addr), &len);
  *port = ntohs(addr.sin_port);
  return fd;
}

Fd connect_local(std::uint16_t port) {
  Fd fd(::socket(AF_INET, SOCK_STREAM, 0));
  if (fd.get() < 0) sys_fail("socket");
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(port);
  if (::connect(fd.get(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) sys_fail("connect");
  tune(fd.get());
  return fd;
}

Fd accept_one(int listener) {
  Fd fd(::accept(listener, nullptr, nullptr));
  if (fd.get() < 0) sys_fail("accept");
  tune(fd.get());
  return fd;
}

class SocketIo : public Io {
 public:
  void send(Port port, wire::WireMessage msg) override { append(out[static_cast<int>(port)], wire::encode(msg)); }
  void forward(Port port, wire::WireMessage msg, FlightTag) override { send(port, std::move(msg)); }
  Bytes out[2];
  std::size_t sent[2] = {0, 0};
  bool pending() const { return sent[0] < out[0].size() || sent[1] < out[1].size(); }
};

// Drives one peer over up to two sockets, indexed by Port. Returns when
// the peer finishes and its output is flushed, or when a socket closes.
void pump(Peer& peer, int fds[2], int timeout_ms, const std::function<void()>& on_activation) {
  SocketIo io;
  Bytes in[2];
  peer.start(io);
  on_activation();
  auto deadline = Clock::now() + std::chrono::milliseconds(timeout_ms);
  std::uint8_t buf[1 << 16];
  for (;;) {
    if (peer.status() != PeerStatus::Running && !io.pending()) return;
    pollfd pf[2];
    int n = 0;
    int which[2];
    for (int p = 0; p < 2; ++p) {
      if (fds[p] < 0) continue;
      pf[n] = {fds[p], POLLIN, 0};
      if (io.sent[p] < io.out[p].size()) pf[n].events |= POLLOUT;
      which[n++] = p;
    }
    if (Clock::now() > deadline) throw Error(ErrorCode::Timeout, "loopback connection timed out");
    if (::poll(pf, static_cast<nfds_t>(n), 100) < 0) {
      if (errno == EINTR) continue;
      sys_fail("poll");
    }
    for (int i = 0; i < n; ++i) {
      int p = which[i];
      if (pf[i].revents & POLLOUT) {
        auto& out = io.out[p];
        auto w = ::send(fds[p], out.data() + io.sent[p], out.size() - io.sent[p], MSG_NOSIGNAL);
        if (w > 0) io.sent[p] += static_cast<std::size_t>(w);
        if (io.sent[p] == out.size()) {
          out.clear();
          io.sent[p] = 0;
        }
      }
      if (pf[i].revents & (POLLIN | POLLHUP | POLLERR)) {
        auto r = ::recv(fds[p], buf, sizeof buf, 0);
        if (r == 0 || (r < 0 && errno != EAGAIN && errno != EWOULDBLOCK)) return;
        if (r < 0) continue;
        in[p].insert(in[p].end(), buf, buf + r);
        std::size_t off = 0;
        while (auto len = wire::frame_length(ByteView(in[p]).subspan(off))) {
          auto msg = wire::decode(ByteView(in[p]).subspan(off, *len));
          off += *len;
          peer.receive(static_cast<Port>(p), Frame{std::move(msg), {}}, io);
          on_activation();
        }
        in[p].erase(in[p].begin(), in[p].begin() + static_cast<std::ptrdiff_t>(off));
      }
    }
  }
}

}  // namespace

LoopbackResult run_loopback(const LoopbackConfig& cfg) {
  if (cfg.connections == 0) throw Error(ErrorCode::Config, "at least one connection");
  detail::World world(cfg.seed, tlx::kDefaultCertSize, see::kUnlimited);
  world.spx.grant_size = cfg.grant_size;
  const std::size_t n = cfg.connections;

  std::vector<std::uint64_t> seeds(3 * n);
  for (auto& s : seeds) s = world.rng.next_u64();
  // Peers are built up front so that threads only touch read-only world state.
  std::vector<std::unique_ptr<ClientPeer>> clients(n);
  std::vector<std::unique_ptr<ServerPeer>> servers(n);
  std::vector<std::unique_ptr<Peer>> edges(n);
  for (std::size_t i = 0; i < n; ++i) {
    TlxClientPeer* tc;
    NoiseClientPeer* nc;
    TlxServerPeer* ts;
    NoiseServerPeer* ns;
    const auto& w = cfg.per_connection.empty() ? cfg.workload : cfg.per_connection[i % cfg.per_connection.size()];
    clients[i] = world.make_client(cfg.protocol, cfg.pattern, w, seeds[3 * i], &tc, &nc);
    servers[i] = world.make_server(cfg.protocol, seeds[3 * i + 1], &ts, &ns);
    if (cfg.mode == Mode::Split) {
      edges[i] = world.make_split(cfg.protocol, cfg.pattern, seeds[3 * i + 2]);
    } else if (cfg.mode == Mode::Spx) {
      edges[i] = std::make_unique<SpxEdgePeer>(world.edge, std::make_unique<core::EnclaveBinder>(*world.enclave),
                                               world.enclave.get(), i, "conn-" + std::to_string(i));
    }
  }

  std::uint16_t server_port = 0;
  std::uint16_t edge_port = 0;
  Fd server_listener = listen_local(&server_port);
  Fd edge_listener;
  if (cfg.mode != Mode::E2E) edge_listener = listen_local(&edge_port);

  LoopbackResult result;
  result.connections.resize(n);
  std::mutex mu;
  double edge_cpu = 0;
  std::vector<std::thread> threads;
  std::atomic<std::size_t> next_server{0};
  std::atomic<std::size_t> next_edge{0};

  auto run_server = [&](Fd sock) {
    auto i = next_server++;
    int fds[2] = {-1, sock.get()};
    try {
      pump(*servers[i], fds, cfg.timeout_ms, [] {});
    } catch (const Error&) {
    }
  };
  auto run_edge = [&](Fd down) {
    auto i = next_edge++;
    auto t0 = thread_cpu_s();
    try {
      Fd up = connect_local(server_port);
      int fds[2] = {up.get(), down.get()};
      pump(*edges[i], fds, cfg.timeout_ms, [] {});
    } catch (const Error&) {
    }
    std::lock_guard lock(mu);
    edge_cpu += thread_cpu_s() - t0;
  };

  auto cpu0 = process_cpu_s();
  auto wall0 = Clock::now();

  std::thread server_acceptor([&] {
    std::vector<std::thread> workers;
    for (std::size_t i = 0; i < n; ++i) {
      workers.emplace_back(run_server, accept_one(server_listener.get()));
    }
    for (auto& w : workers) w.join();
  });
  std::thread edge_acceptor;
  if (cfg.mode != Mode::E2E) {
    edge_acceptor = std::thread([&] {
      std::vector<std::thread> workers;
      for (std::size_t i = 0; i < n; ++i) workers.emplace_back(run_edge, accept_one(edge_listener.get()));
      for (auto& w : workers) w.join();
    });
  }

  for (std::size_t i = 0; i < n; ++i) {
    threads.emplace_back([&, i] {
      auto& r = result.connections[i];
      auto& peer = *clients[i];
      auto t0 = Clock::now();
      bool hs = false;
      try {
        Fd sock = connect_local(cfg.mode == Mode::E2E ? server_port : edge_port);
        int fds[2] = {sock.get(), -1};
        pump(peer, fds, cfg.timeout_ms, [&] {
          if (!hs && peer.handshake_complete()) {
            hs = true;
            r.handshake_s = seconds_since(t0);
          }
        });
      } catch (const Error& e) {
        r.error = e.what();
      }
      r.total_s = seconds_since(t0);
      r.bytes_echoed = peer.bytes_echoed();
      r.ok = hs && peer.status() == PeerStatus::Done;
      if (!r.ok && r.error.empty()) r.error = peer.error().empty() ? "connection closed" : peer.error();
    });
  }
  for (auto& t : threads) t.join();
  if (edge_acceptor.joinable()) edge_acceptor.join();
  server_acceptor.join();

  result.wall_s = seconds_since(wall0);
  result.process_cpu_s = process_cpu_s() - cpu0;
  result.edge_cpu_s = edge_cpu;
  return result;
}

}  // namespace spx::net
