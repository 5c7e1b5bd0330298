#include "spx/netsim.hpp"

#include <algorithm>
#include <ostream>

#include "json.hpp"
#include "spx/spx_core.hpp"

namespace spx::net {

std::uint64_t CostModel::cost(const crypto::OpCounters& d) const {
  return activation_ns + d.keygen * keygen_ns + d.dh * dh_ns + d.sign * sign_ns + d.verify * verify_ns +
         d.aead_calls * aead_call_ns + d.aead_bytes * aead_kb_ns / 1000 + d.hash_calls * hash_call_ns;
}

namespace {

struct Link {
  NodeId end[2];
  Port port[2];
  std::uint64_t latency;
  std::string label;
  std::uint32_t conn;
  std::uint64_t last_delivery[2] = {0, 0};
};

struct Node {
  std::string name;
  HostId host;
  std::unique_ptr<Peer> peer;
  bool client;
  std::uint64_t start_ns;
  std::optional<std::size_t> links[2];
  std::uint64_t activations = 0;
  std::optional<std::uint64_t> handshake_ns;
  std::optional<std::uint64_t> finished_ns;
};

struct Event {
  std::uint64_t time;
  std::uint64_t seq;
  NodeId node;
  bool start;
  std::size_t link;
  int dir;
  Frame frame;
  std::uint64_t sent;
};

struct Later {
  bool operator()(const Event& a, const Event& b) const {
    return a.time != b.time ? a.time > b.time : a.seq > b.seq;
  }
};

struct Outgoing {
  Port port;
  wire::WireMessage msg;
  FlightTag flight;
};

class CollectIo : public Io {
 public:
  explicit CollectIo(FlightTag own) : own_(own) {}
  void send(Port port, wire::WireMessage msg) override { out.push_back({port, std::move(msg), own_}); }
  void forward(Port port, wire::WireMessage msg, FlightTag flight) override {
    out.push_back({port, std::move(msg), flight});
  }
  std::vector<Outgoing> out;

 private:
  FlightTag own_;
};

}  // namespace

struct Simulator::Impl {
  CostModel cost;
  bool trace_payloads;
  std::vector<std::string> hosts;
  std::vector<std::uint64_t> host_free;
  std::vector<Node> nodes;
  std::vector<Link> links;
  std::vector<Event> heap;
  std::uint64_t seq = 0;

  void push(Event e) {
    e.seq = seq++;
    heap.push_back(std::move(e));
    std::push_heap(heap.begin(), heap.end(), Later{});
  }

  Event pop() {
    std::pop_heap(heap.begin(), heap.end(), Later{});
    Event e = std::move(heap.back());
    heap.pop_back();
    return e;
  }
};

Simulator::Simulator(CostModel cost, bool trace_payloads) : impl_(std::make_unique<Impl>()) {
  impl_->cost = cost;
  impl_->trace_payloads = trace_payloads;
}

Simulator::~Simulator() = default;

HostId Simulator::add_host(std::string name) {
  impl_->hosts.push_back(std::move(name));
  impl_->host_free.push_back(0);
  return static_cast<HostId>(impl_->hosts.size() - 1);
}

NodeId Simulator::add_node(std::string name, HostId host, std::unique_ptr<Peer> peer, bool client,
                           std::uint64_t start_ns) {
  if (host >= impl_->hosts.size()) throw Error(ErrorCode::Config, "unknown host for " + name);
  impl_->nodes.push_back(Node{std::move(name), host, std::move(peer), client, start_ns, {}, 0, {}, {}});
  return static_cast<NodeId>(impl_->nodes.size() - 1);
}

void Simulator::connect(NodeId a, Port pa, NodeId b, Port pb, std::uint64_t latency_ns, std::string label,
                        std::uint32_t conn) {
  auto& na = impl_->nodes.at(a);
  auto& nb = impl_->nodes.at(b);
  auto ia = static_cast<std::size_t>(pa);
  auto ib = static_cast<std::size_t>(pb);
  if (na.links[ia] || nb.links[ib]) throw Error(ErrorCode::Config, "port already connected");
  impl_->links.push_back(Link{{a, b}, {pa, pb}, latency_ns, std::move(label), conn});
  na.links[ia] = nb.links[ib] = impl_->links.size() - 1;
}

std::size_t Simulator::node_count() const { return impl_->nodes.size(); }
Peer& Simulator::peer(NodeId n) { return *impl_->nodes.at(n).peer; }
const std::string& Simulator::name(NodeId n) const { return impl_->nodes.at(n).name; }
std::optional<std::uint64_t> Simulator::handshake_ns(NodeId n) const { return impl_->nodes.at(n).handshake_ns; }
std::optional<std::uint64_t> Simulator::finished_ns(NodeId n) const { return impl_->nodes.at(n).finished_ns; }

RunStats Simulator::run(std::size_t max_deliveries) {
  auto& im = *impl_;
  RunStats stats;
  for (NodeId n = 0; n < im.nodes.size(); ++n) {
    Event e{};
    e.time = im.nodes[n].start_ns;
    e.node = n;
    e.start = true;
    im.push(std::move(e));
  }

  while (!im.heap.empty()) {
    Event ev = im.pop();
    auto& node = im.nodes[ev.node];

    if (!ev.start) {
      if (++stats.deliveries > max_deliveries) throw Error(ErrorCode::Timeout, "delivery budget exhausted");
      const auto& link = im.links[ev.link];
      TraceEvent t;
      t.seq = trace_.size();
      t.sent_ns = ev.sent;
      t.time_ns = ev.time;
      t.link = link.label;
      t.conn = link.conn;
      t.from = im.nodes[link.end[ev.dir]].name;
      t.to = node.name;
      t.flight = ev.frame.flight;
      t.bytes = ev.frame.msg.wire_size();
      t.spx_payload = core::spx_payload_bytes(ev.frame.msg);
      t.spx_framing = core::spx_framing_bytes(ev.frame.msg);
      t.msg.type = ev.frame.msg.type;
      t.msg.flags = ev.frame.msg.flags;
      if (im.trace_payloads) t.msg.payload = ev.frame.msg.payload;
      trace_.push_back(std::move(t));
    }

    auto start = std::max(ev.time, im.host_free[node.host]);
    auto before = crypto::op_counters();
    CollectIo io({ev.node, node.activations++});
    if (ev.start) {
      node.peer->start(io);
    } else {
      const auto& link = im.links[ev.link];
      node.peer->receive(link.port[1 - ev.dir], ev.frame, io);
    }
    auto end = start + im.cost.cost(crypto::op_counters() - before);
    im.host_free[node.host] = end;
    activations_.push_back({ev.node, start, end});
    stats.end_ns = std::max(stats.end_ns, end);

    if (!node.handshake_ns && node.peer->handshake_complete()) node.handshake_ns = end;
    if (!node.finished_ns && node.peer->status() != PeerStatus::Running) node.finished_ns = end;

    for (auto& o : io.out) {
      auto li = node.links[static_cast<std::size_t>(o.port)];
      if (!li) throw Error(ErrorCode::Config, node.name + " sent on an unconnected port");
      auto& link = im.links[*li];
      int dir = link.end[0] == ev.node && link.port[0] == o.port ? 0 : 1;
      auto at = std::max(end + link.latency, link.last_delivery[dir]);
      link.last_delivery[dir] = at;
      Event d{};
      d.time = at;
      d.node = link.end[1 - dir];
      d.start = false;
      d.link = *li;
      d.dir = dir;
      d.frame = Frame{std::move(o.msg), o.flight};
      d.sent = end;
      im.push(std::move(d));
    }
  }

  for (const auto& n : im.nodes) {
    if (n.client && n.peer->status() == PeerStatus::Running) {
      stats.deadlock = true;
      stats.stuck.push_back(n.name);
    }
  }
  return stats;
}

std::string trace_event_json(const TraceEvent& e) {
  nlohmann::ordered_json j;
  j["seq"] = e.seq;
  j["sent_ns"] = e.sent_ns;
  j["time_ns"] = e.time_ns;
  j["link"] = e.link;
  j["conn"] = e.conn;
  j["from"] = e.from;
  j["to"] = e.to;
  j["flight"] = {e.flight.origin, e.flight.seq};
  j["type"] = wire::name(e.msg.type);
  j["flags"] = e.msg.flags;
  j["bytes"] = e.bytes;
  j["spx_bytes"] = e.spx_payload;
  j["payload"] = to_hex(e.msg.payload);
  return j.dump();
}

void Simulator::write_jsonl(std::ostream& out) const {
  for (const auto& e : trace_) out << trace_event_json(e) << '\n';
}

}  // namespace spx::net
