#include "spx/harness.hpp"

#include <cmath>
#include <map>
#include <set>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace spx::harness {

using net::Mode;
using net::Protocol;

Stats summarize(const std::vector<double>& xs) {
  Stats s;
  s.n = xs.size();
  if (xs.empty()) return s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return s;
}

void Table::write_csv(std::ostream& out) const {
  out << "# spx-bench schema=" << kSchemaVersion << " kind=" << kind << '\n';
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
    out << '\n';
  };
  line(columns);
  for (const auto& r : rows) line(r);
}

void Table::write_markdown(std::ostream& out) const {
  out << "<!-- spx-bench schema=" << kSchemaVersion << " kind=" << kind << " -->\n";
  auto line = [&](const std::vector<std::string>& cells) {
    out << '|';
    for (const auto& c : cells) out << ' ' << c << " |";
    out << '\n';
  };
  line(columns);
  out << '|';
  for (std::size_t i = 0; i < columns.size(); ++i) out << "---|";
  out << '\n';
  for (const auto& r : rows) line(r);
}

std::vector<std::size_t> default_sizes() { return {1024, 16 * 1024, 64 * 1024, 256 * 1024, 1024 * 1024, 1600 * 1024}; }

namespace {

std::string num(double v, int precision = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

std::string num(std::size_t v) { return std::to_string(v); }
std::string num(long v) { return std::to_string(v); }
std::string yes(bool b) { return b ? "yes" : "no"; }

std::string pattern_col(const BenchOptions& o) {
  return o.protocol == Protocol::Tlx ? "-" : std::string(noise::pattern_name(o.pattern));
}

net::ScenarioConfig scenario(const BenchOptions& o, Mode m) {
  net::ScenarioConfig c;
  c.protocol = o.protocol;
  c.pattern = o.pattern;
  c.mode = m;
  c.grant_size = o.grant_size;
  c.seed = o.seed;
  return c;
}

net::LoopbackConfig loopback(const BenchOptions& o, Mode m, std::uint64_t run) {
  net::LoopbackConfig c;
  c.protocol = o.protocol;
  c.pattern = o.pattern;
  c.mode = m;
  c.grant_size = o.grant_size;
  c.seed = o.seed + run;
  return c;
}

net::LoopbackResult checked(const net::LoopbackConfig& c) {
  auto r = net::run_loopback(c);
  if (!r.all_ok()) {
    throw Error(ErrorCode::ProtocolViolation, "loopback " + std::string(net::to_string(c.mode)) +
                                                  " run failed: " + r.connections.front().error);
  }
  return r;
}

void require_runs(const BenchOptions& o) {
  if (o.runs < 2) throw Error(ErrorCode::Config, "runs must be at least 2");
}

constexpr Mode kModes[] = {Mode::E2E, Mode::Split, Mode::Spx};

// Wall-clock samples for `configs` configurations. One unrecorded warmup
// pass, then `runs` rounds visiting every configuration in turn so that
// transient machine noise is spread across all of them.
template <class Measure>
std::vector<std::vector<double>> interleaved(std::size_t configs, std::size_t runs, Measure measure) {
  std::vector<std::vector<double>> xs(configs);
  for (std::size_t i = 0; i < configs; ++i) measure(i, runs);
  for (std::size_t k = 0; k < runs; ++k) {
    for (std::size_t i = 0; i < configs; ++i) xs[i].push_back(measure(i, k));
  }
  return xs;
}

std::size_t max_record_payload(const net::ScenarioResult& r) {
  std::size_t m = 0;
  for (const auto& e : r.trace) {
    if (e.msg.type == wire::MsgType::ApplicationData || e.msg.type == wire::MsgType::NoiseTransport) {
      m = std::max(m, e.bytes - wire::kHeaderLen);
    }
  }
  return m;
}

}  // namespace

Table bench_handshake(const BenchOptions& o) {
  require_runs(o);
  Table t{"handshake",
          {"protocol", "pattern", "mode", "runs", "sim_handshake_us", "wall_mean_ms", "wall_stddev_ms",
           "wall_vs_split", "extra_rtts", "extra_bytes", "extra_wire_bytes"},
          {}};
  std::map<Mode, net::ScenarioResult> sim;
  std::map<Mode, Stats> wall;
  for (auto m : kModes) {
    sim[m] = net::run_scenario(scenario(o, m));
    if (!sim[m].all_success()) {
      throw Error(ErrorCode::ProtocolViolation, "simulated " + std::string(net::to_string(m)) + " handshake failed");
    }
  }
  if (o.wall_clock) {
    auto xs = interleaved(std::size(kModes), o.runs, [&](std::size_t i, std::size_t k) {
      return checked(loopback(o, kModes[i], k)).mean_handshake_s() * 1e3;
    });
    for (std::size_t i = 0; i < std::size(kModes); ++i) wall[kModes[i]] = summarize(xs[i]);
  }
  for (auto m : kModes) {
    long rtts = 0;
    long bytes = 0;
    long wire_bytes = 0;
    if (m == Mode::Spx) {
      auto ov = net::overhead(sim[Mode::Spx], sim[Mode::Split]);
      rtts = ov.extra_flights;
      bytes = static_cast<long>(ov.spx_payload);
      wire_bytes = ov.extra_bytes;
    }
    auto hs = sim[m].connections.front().handshake_ns.value_or(0);
    t.rows.push_back({std::string(net::to_string(o.protocol)), pattern_col(o), std::string(net::to_string(m)),
                      num(o.runs), num(static_cast<double>(hs) / 1e3, 1),
                      o.wall_clock ? num(wall[m].mean) : "", o.wall_clock ? num(wall[m].stddev) : "",
                      o.wall_clock ? num(wall[m].mean / wall[Mode::Split].mean) : "", num(rtts), num(bytes),
                      num(wire_bytes)});
  }
  return t;
}

Table bench_transfer(const BenchOptions& o) {
  require_runs(o);
  if (o.sizes.empty()) throw Error(ErrorCode::Config, "no transfer sizes");
  Table t{"transfer",
          {"protocol", "pattern", "mode", "bytes", "bit_exact", "max_record_payload", "sim_transfer_ms",
           "wall_mean_ms", "wall_stddev_ms", "spx_vs_split"},
          {}};
  for (auto size : o.sizes) {
    std::map<Mode, Stats> wall;
    std::map<Mode, bool> loop_exact;
    std::vector<std::vector<std::string>> rows;
    if (o.wall_clock) {
      auto xs = interleaved(std::size(kModes), o.runs, [&](std::size_t i, std::size_t k) {
        auto lc = loopback(o, kModes[i], k);
        lc.workload = net::Workload{size, 0, 16, o.seed + k};
        auto lr = checked(lc);
        if (lr.connections.front().bytes_echoed != size) loop_exact[kModes[i]] = false;
        return lr.mean_total_s() * 1e3;
      });
      for (std::size_t i = 0; i < std::size(kModes); ++i) wall[kModes[i]] = summarize(xs[i]);
    }
    for (auto m : kModes) {
      auto c = scenario(o, m);
      c.workloads = {net::Workload{size, 0, 16, o.seed}};
      auto r = net::run_scenario(c);
      const auto& conn = r.connections.front();
      bool exact = r.all_success() && conn.bytes_echoed == size && !loop_exact.contains(m);
      rows.push_back({std::string(net::to_string(o.protocol)), pattern_col(o), std::string(net::to_string(m)),
                      num(size), yes(exact), num(max_record_payload(r)),
                      num(static_cast<double>(conn.done_ns.value_or(0)) / 1e6), o.wall_clock ? num(wall[m].mean) : "",
                      o.wall_clock ? num(wall[m].stddev) : "", ""});
    }
    if (o.wall_clock) rows.back().back() = num(wall[Mode::Spx].mean / wall[Mode::Split].mean);
    for (auto& r : rows) t.rows.push_back(std::move(r));
  }
  return t;
}

Table bench_pageload(const BenchOptions& o, const PageSpec& page) {
  require_runs(o);
  if (page.objects.empty() || page.connections == 0) throw Error(ErrorCode::Config, "empty page");
  auto conns = std::min(page.connections, page.objects.size());
  // Objects are assigned round-robin; each connection echoes its share in order.
  std::vector<net::Workload> share(conns);
  std::size_t total = 0;
  for (std::size_t i = 0; i < page.objects.size(); ++i) {
    share[i % conns].bytes += page.objects[i];
    total += page.objects[i];
  }
  for (std::size_t i = 0; i < conns; ++i) share[i].seed = o.seed + i;

  Table t{"pageload",
          {"protocol", "pattern", "mode", "objects", "connections", "total_bytes", "loaded", "sim_load_ms",
           "wall_mean_ms", "wall_stddev_ms"},
          {}};
  std::vector<std::vector<double>> xs;
  if (o.wall_clock) {
    xs = interleaved(std::size(kModes), o.runs, [&](std::size_t i, std::size_t k) {
      auto lc = loopback(o, kModes[i], k);
      lc.connections = conns;
      lc.per_connection = share;
      return checked(lc).wall_s * 1e3;
    });
  }
  for (std::size_t i = 0; i < std::size(kModes); ++i) {
    auto m = kModes[i];
    auto c = scenario(o, m);
    c.clients = conns;
    c.workloads = share;
    c.trace_payloads = false;
    auto r = net::run_scenario(c);
    bool ok = r.all_success();
    Stats wall;
    if (o.wall_clock) wall = summarize(xs[i]);
    t.rows.push_back({std::string(net::to_string(o.protocol)), pattern_col(o), std::string(net::to_string(m)),
                      num(page.objects.size()), num(conns), num(total), yes(ok),
                      num(static_cast<double>(r.max_done_ns()) / 1e6), o.wall_clock ? num(wall.mean) : "",
                      o.wall_clock ? num(wall.stddev) : ""});
  }
  return t;
}

Table bench_concurrency(const BenchOptions& o, const std::vector<std::size_t>& ns) {
  require_runs(o);
  Table t{"concurrency",
          {"protocol", "pattern", "mode", "connections", "runs", "per_handshake_ms", "stddev_ms",
           "client_latency_ms", "variation", "flat"},
          {}};
  for (auto m : {Mode::Split, Mode::Spx}) {
    std::vector<Stats> per;
    std::vector<double> latency(ns.size(), 0);
    auto xs = interleaved(ns.size(), o.runs, [&](std::size_t i, std::size_t k) {
      auto lc = loopback(o, m, k);
      lc.connections = ns[i];
      auto lr = checked(lc);
      if (k < o.runs) latency[i] += lr.mean_handshake_s() * 1e3 / static_cast<double>(o.runs);
      return lr.wall_s * 1e3 / static_cast<double>(ns[i]);
    });
    for (const auto& x : xs) per.push_back(summarize(x));
    double lo = per.front().mean;
    double hi = lo;
    for (const auto& s : per) {
      lo = std::min(lo, s.mean);
      hi = std::max(hi, s.mean);
    }
    double variation = (hi - lo) / lo;
    for (std::size_t i = 0; i < ns.size(); ++i) {
      t.rows.push_back({std::string(net::to_string(o.protocol)), pattern_col(o), std::string(net::to_string(m)),
                        num(ns[i]), num(o.runs), num(per[i].mean), num(per[i].stddev), num(latency[i]),
                        num(variation), yes(variation < kConcurrencyTolerance)});
    }
  }
  return t;
}

Table bench_cpu(const BenchOptions& o, std::size_t connections) {
  require_runs(o);
  Table t{"cpu",
          {"protocol", "pattern", "mode", "connections", "runs", "edge_cpu_ms_per_handshake", "stddev_ms",
           "process_cpu_ms_per_handshake", "sim_edge_busy_us_per_handshake", "edge_cpu_vs_split"},
          {}};
  std::map<Mode, Stats> edge;
  std::vector<std::vector<std::string>> rows;
  constexpr Mode kCompared[] = {Mode::Split, Mode::Spx};
  std::vector<double> proc[2];
  auto xs = interleaved(2, o.runs, [&](std::size_t i, std::size_t k) {
    auto lc = loopback(o, kCompared[i], k);
    lc.connections = connections;
    auto lr = checked(lc);
    if (k < o.runs) proc[i].push_back(lr.process_cpu_s * 1e3 / static_cast<double>(connections));
    return lr.edge_cpu_s * 1e3 / static_cast<double>(connections);
  });
  for (std::size_t i = 0; i < 2; ++i) {
    auto m = kCompared[i];
    edge[m] = summarize(xs[i]);

    auto c = scenario(o, m);
    c.clients = connections;
    auto r = net::run_scenario(c);
    std::uint64_t busy = 0;
    for (const auto& a : r.activations) {
      if (r.node_names[a.node].rfind("edge-", 0) == 0) busy += a.end_ns - a.start_ns;
    }
    rows.push_back({std::string(net::to_string(o.protocol)), pattern_col(o), std::string(net::to_string(m)),
                    num(connections), num(o.runs), num(edge[m].mean), num(edge[m].stddev),
                    num(summarize(proc[i]).mean),
                    num(static_cast<double>(busy) / 1e3 / static_cast<double>(connections), 1), ""});
  }
  for (auto& r : rows) r.back() = num(edge[net::parse_mode(r[2])].mean / edge[Mode::Split].mean);
  t.rows = std::move(rows);
  return t;
}

Table overhead_table(std::size_t tlx_grant, std::size_t noise_grant, std::uint64_t seed) {
  Table t{"overhead",
          {"protocol", "pattern", "grant_bytes", "extra_bytes", "extra_wire_bytes", "extra_rtts"},
          {}};
  auto row = [&](Protocol p, noise::Pattern pat, std::size_t grant) {
    BenchOptions o;
    o.protocol = p;
    o.pattern = pat;
    o.grant_size = grant;
    o.seed = seed;
    auto spx = net::run_scenario(scenario(o, Mode::Spx));
    auto split = net::run_scenario(scenario(o, Mode::Split));
    if (!spx.all_success() || !split.all_success()) throw Error(ErrorCode::ProtocolViolation, "overhead run failed");
    auto ov = net::overhead(spx, split);
    t.rows.push_back({std::string(net::to_string(p)), pattern_col(o), num(grant), num(ov.spx_payload),
                      num(ov.extra_bytes), num(ov.extra_flights)});
  };
  row(Protocol::Tlx, noise::Pattern::XX, tlx_grant);
  for (auto p : {noise::Pattern::NN, noise::Pattern::NK, noise::Pattern::XK, noise::Pattern::XX, noise::Pattern::IK}) {
    row(Protocol::NoiXe, p, noise_grant);
  }
  return t;
}

Table attack_table(net::AttackKind kind, bool strawman, std::size_t runs, std::uint64_t seed) {
  Table t{"attack",
          {"attack", "binding", "protocol", "runs", "defeated", "succeeded", "tactics"},
          {}};
  for (auto p : {Protocol::Tlx, Protocol::NoiXe}) {
    std::size_t defeated = 0;
    std::map<std::string, std::size_t> tactics;
    core::BindingMode binding = core::BindingMode::Spx;
    for (std::size_t k = 0; k < runs; ++k) {
      net::AttackConfig c;
      c.kind = kind;
      c.protocol = p;
      c.strawman = strawman;
      c.seed = seed + k;
      auto r = net::run_attack(c);
      binding = r.binding;
      if (r.outcome == net::AttackOutcome::AttackDefeated) ++defeated;
      ++tactics[std::string(net::to_string(r.tactic))];
    }
    std::string tac;
    for (const auto& [name, count] : tactics) tac += (tac.empty() ? "" : " ") + name + "=" + std::to_string(count);
    t.rows.push_back({std::string(net::to_string(kind)), std::string(core::to_string(binding)),
                      std::string(net::to_string(p)) + (p == Protocol::NoiXe ? "/XX" : ""), num(runs),
                      num(defeated), num(runs - defeated), tac});
  }
  return t;
}

std::map<std::string, std::string> parse_kv(std::istream& in) {
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t lineno = 0;
  auto trim = [](std::string s) {
    auto b = s.find_first_not_of(" \t\r");
    auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::Config, "line " + std::to_string(lineno) + ": expected key = value");
    }
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

namespace {

struct Kv {
  const std::map<std::string, std::string>& m;
  std::string str(const std::string& k, std::string def) const {
    auto it = m.find(k);
    return it == m.end() ? def : it->second;
  }
  std::uint64_t u64(const std::string& k, std::uint64_t def) const {
    auto it = m.find(k);
    if (it == m.end()) return def;
    try {
      std::size_t pos = 0;
      auto v = std::stoull(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument(k);
      return v;
    } catch (const std::exception&) {
      throw Error(ErrorCode::Config, "'" + k + "' is not an unsigned integer");
    }
  }
  std::uint64_t us_to_ns(const std::string& k, std::uint64_t def_ns) const {
    auto it = m.find(k);
    if (it == m.end()) return def_ns;
    double v = 0;
    try {
      v = std::stod(it->second);
    } catch (const std::exception&) {
      throw Error(ErrorCode::Config, "'" + k + "' is not a number");
    }
    if (v < 0) throw Error(ErrorCode::Config, "'" + k + "' must be non-negative");
    return static_cast<std::uint64_t>(std::llround(v * 1000.0));
  }
  bool flag(const std::string& k) const {
    auto v = str(k, "false");
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw Error(ErrorCode::Config, "'" + k + "' must be true or false");
  }
};

const std::set<std::string> kTopologyKeys = {
    "protocol", "pattern", "mode", "router", "strawman", "clients", "bytes", "block", "grant_size", "cert_size",
    "latency_client_edge_us", "latency_edge_server_us", "latency_client_server_us", "seed", "trace"};

void write_trace(const std::string& path, const std::vector<net::TraceEvent>& trace) {
  if (path.empty()) return;
  std::ofstream f(path);
  if (!f) throw Error(ErrorCode::Config, "cannot write trace to " + path);
  for (const auto& e : trace) f << net::trace_event_json(e) << '\n';
}

}  // namespace

RunReport run_topology(const std::map<std::string, std::string>& kv_map, std::uint64_t seed_override) {
  for (const auto& [k, v] : kv_map) {
    if (!kTopologyKeys.contains(k)) throw Error(ErrorCode::Config, "unknown topology key '" + k + "'");
  }
  Kv kv{kv_map};
  auto proto = net::parse_protocol(kv.str("protocol", "tlx"));
  auto pattern_name = kv.str("pattern", "XX");
  auto pattern = noise::parse_pattern(pattern_name);
  if (!pattern) throw Error(ErrorCode::Config, "unknown pattern '" + pattern_name + "'");
  auto seed = seed_override ? seed_override : kv.u64("seed", 1);
  auto router = kv.str("router", "honest");
  net::Latencies lat;
  lat.client_edge_ns = kv.us_to_ns("latency_client_edge_us", lat.client_edge_ns);
  lat.edge_server_ns = kv.us_to_ns("latency_edge_server_us", lat.edge_server_ns);
  lat.client_server_ns = kv.us_to_ns("latency_client_server_us", lat.client_server_ns);
  auto trace_path = kv.str("trace", "");

  std::ostringstream out;
  RunReport rep;
  if (router == "cuckoo" || router == "tocttou") {
    net::AttackConfig c;
    c.kind = router == "cuckoo" ? net::AttackKind::Cuckoo : net::AttackKind::Tocttou;
    c.protocol = proto;
    c.pattern = *pattern;
    c.strawman = kv.flag("strawman");
    c.latency = lat;
    c.seed = seed;
    auto r = net::run_attack(c);
    out << "attack=" << net::to_string(c.kind) << " binding=" << core::to_string(r.binding)
        << " tactic=" << net::to_string(r.tactic) << " outcome=" << net::to_string(r.outcome)
        << " server_accepted_bind=" << yes(r.server_accepted_bind) << '\n';
    if (!r.server_error.empty()) out << "server: " << r.server_error << '\n';
    if (!r.attacker_error.empty()) out << "attacker: " << r.attacker_error << '\n';
    write_trace(trace_path, r.trace);
    // A succeeding attack is the expected result only for the strawman.
    rep.ok = (r.outcome == net::AttackOutcome::AttackSucceeded) == c.strawman;
    rep.summary = out.str();
    return rep;
  }

  net::ScenarioConfig c;
  c.protocol = proto;
  c.pattern = *pattern;
  if (router == "honest") {
    c.mode = net::parse_mode(kv.str("mode", "spx"));
  } else if (router == "split") {
    c.mode = Mode::Split;
  } else if (router == "passive") {
    c.mode = net::parse_mode(kv.str("mode", "spx"));
  } else {
    throw Error(ErrorCode::Config, "unknown router '" + router + "'");
  }
  c.clients = kv.u64("clients", 1);
  c.workloads = {net::Workload{kv.u64("bytes", 1024), kv.u64("block", 0), 16, seed}};
  c.grant_size = kv.u64("grant_size", core::kNaturalGrantSize);
  c.cert_size = kv.u64("cert_size", tlx::kDefaultCertSize);
  c.latency = lat;
  c.seed = seed;
  auto r = net::run_scenario(c);
  rep.ok = r.all_success();
  out << "protocol=" << net::to_string(proto) << (proto == Protocol::NoiXe ? "/" + pattern_name : "")
      << " mode=" << net::to_string(c.mode) << " clients=" << c.clients << " ok=" << yes(rep.ok)
      << " deadlock=" << yes(r.run.deadlock) << " end_ms=" << num(static_cast<double>(r.run.end_ns) / 1e6) << '\n';
  for (std::size_t i = 0; i < r.connections.size(); ++i) {
    const auto& conn = r.connections[i];
    out << "  conn " << i << ": handshake_ms="
        << (conn.handshake_ns ? num(static_cast<double>(*conn.handshake_ns) / 1e6) : "-")
        << " echoed=" << conn.bytes_echoed << " keys_agree=" << yes(conn.keys_agree());
    if (!conn.client_error.empty()) out << " client_error=\"" << conn.client_error << '"';
    if (!conn.edge_error.empty()) out << " edge_error=\"" << conn.edge_error << '"';
    out << '\n';
  }
  for (const auto& [label, a] : r.links) {
    out << "  link " << label << ": frames=" << a.frames << " bytes=" << a.bytes << " flights=" << a.flights
        << " spx_bytes=" << a.spx_payload << '\n';
  }
  if (router == "passive") {
    bool leaked = false;
    for (const auto& conn : r.connections) {
      for (const auto& k : {conn.client_key, conn.client_reverse_key}) {
        if (k && net::trace_contains(r.trace, k ? ByteView(*k) : ByteView())) leaked = true;
      }
    }
    out << "  passive observer saw session-key bytes: " << yes(leaked) << '\n';
    rep.ok = rep.ok && !leaked;
  }
  write_trace(trace_path, r.trace);
  rep.summary = out.str();
  return rep;
}

}  // namespace spx::harness
