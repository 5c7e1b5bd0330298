#include <cstdlib>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "spx/harness.hpp"

using namespace spx;

namespace {

std::uint64_t env_seed(std::uint64_t fallback) {
  const char* s = std::getenv("SPX_SEED");
  if (!s || !*s) return fallback;
  char* end = nullptr;
  auto v = std::strtoull(s, &end, 10);
  if (*end != '\0') throw Error(ErrorCode::Config, "SPX_SEED must be an unsigned integer");
  return v;
}

void emit(const harness::Table& t, bool markdown, const std::string& out_path) {
  std::ofstream file;
  std::ostream* os = &std::cout;
  if (!out_path.empty()) {
    file.open(out_path);
    if (!file) throw Error(ErrorCode::Config, "cannot write " + out_path);
    os = &file;
  }
  if (markdown) {
    t.write_markdown(*os);
  } else {
    t.write_csv(*os);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SPX edge-ready protocol extensions: benchmarks, attacks and simulated runs"};
  app.require_subcommand(1);

  std::string protocol = "tlx";
  std::string pattern = "XX";
  std::size_t runs = 20;
  std::uint64_t seed = 1;
  bool markdown = false;
  std::string out_path;
  std::vector<std::size_t> sizes = harness::default_sizes();
  std::size_t grant = core::kNaturalGrantSize;
  std::vector<std::size_t> ns = {1, 8, 64};
  std::size_t cpu_connections = 16;
  std::size_t objects = 50;
  std::size_t object_size = 20 * 1024;
  std::size_t page_connections = 6;
  bool sim_only = false;
  std::size_t tlx_grant = 128;
  std::size_t noise_grant = 66;

  auto bench = app.add_subcommand("bench", "Run a benchmark and print a CSV table");
  bench->require_subcommand(1);
  auto common = [&](CLI::App* c) {
    c->add_option("--protocol", protocol, "tlx or noixe")->capture_default_str();
    c->add_option("--pattern", pattern, "NoiXe pattern: NN NK XK XX IK")->capture_default_str();
    c->add_option("--runs", runs, "Repetitions per configuration")->capture_default_str();
    c->add_option("--seed", seed, "RNG seed (SPX_SEED overrides)")->capture_default_str();
    c->add_option("--grant-size", grant, "Grant payload bytes")->capture_default_str();
    c->add_flag("--markdown", markdown, "Render as a markdown table");
    c->add_flag("--sim-only", sim_only, "Skip loopback wall-clock measurements");
    c->add_option("-o,--out", out_path, "Write to a file instead of stdout");
  };
  auto b_hs = bench->add_subcommand("handshake", "Handshake time for E2E, Split and SPX");
  auto b_tx = bench->add_subcommand("transfer", "Echo file transfer across sizes");
  auto b_pl = bench->add_subcommand("pageload", "Synthetic multi-object page load");
  auto b_cc = bench->add_subcommand("concurrency", "Per-handshake time against concurrent connections");
  auto b_cpu = bench->add_subcommand("cpu", "Edge CPU time per handshake");
  auto b_ov = bench->add_subcommand("overhead", "Extra bytes and round trips due to SPX");
  for (auto c : {b_hs, b_tx, b_pl, b_cc, b_cpu, b_ov}) common(c);
  b_tx->add_option("--sizes", sizes, "Byte counts")->capture_default_str();
  b_pl->add_option("--objects", objects, "Objects per page")->capture_default_str();
  b_pl->add_option("--object-size", object_size, "Bytes per object")->capture_default_str();
  b_pl->add_option("--connections", page_connections, "Connections per page")->capture_default_str();
  b_cc->add_option("--connections", ns, "Concurrency levels")->capture_default_str();
  b_cpu->add_option("--connections", cpu_connections, "Connections per run")->capture_default_str();
  b_ov->add_option("--tlx-grant", tlx_grant, "TLX grant bytes")->capture_default_str();
  b_ov->add_option("--noise-grant", noise_grant, "NoiXe grant bytes")->capture_default_str();

  auto attack = app.add_subcommand("attack", "Mount an adversary against SPX or a strawman binding");
  attack->require_subcommand(1);
  bool strawman = false;
  auto a_cuckoo = attack->add_subcommand("cuckoo", "Attacker relays attestation through a benign enclave");
  auto a_tocttou = attack->add_subcommand("tocttou", "Attacker swaps the channel after attestation");
  std::size_t attack_runs = 100;
  for (auto c : {a_cuckoo, a_tocttou}) {
    c->add_flag("--strawman", strawman, "Target the strawman binding instead of SPX");
    c->add_option("--runs", attack_runs, "Seeded runs")->capture_default_str();
    c->add_option("--seed", seed, "First seed (SPX_SEED overrides)")->capture_default_str();
    c->add_flag("--markdown", markdown, "Render as a markdown table");
    c->add_option("-o,--out", out_path, "Write to a file instead of stdout");
  }

  auto run = app.add_subcommand("run", "Run one simulated topology");
  std::string topology;
  run->add_option("--topology", topology, "key = value topology file")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    seed = env_seed(seed);
    if (*bench) {
      harness::BenchOptions o;
      o.protocol = net::parse_protocol(protocol);
      auto p = noise::parse_pattern(pattern);
      if (!p) throw Error(ErrorCode::Config, "unknown pattern '" + pattern + "'");
      o.pattern = *p;
      o.runs = runs;
      o.seed = seed;
      o.sizes = sizes;
      o.grant_size = grant;
      o.wall_clock = !sim_only;
      harness::Table t;
      if (*b_hs) t = harness::bench_handshake(o);
      if (*b_tx) t = harness::bench_transfer(o);
      if (*b_pl) t = harness::bench_pageload(o, {std::vector<std::size_t>(objects, object_size), page_connections});
      if (*b_cc) t = harness::bench_concurrency(o, ns);
      if (*b_cpu) t = harness::bench_cpu(o, cpu_connections);
      if (*b_ov) t = harness::overhead_table(tlx_grant, noise_grant, seed);
      emit(t, markdown, out_path);
      return 0;
    }
    if (*attack) {
      auto kind = *a_cuckoo ? net::AttackKind::Cuckoo : net::AttackKind::Tocttou;
      auto t = harness::attack_table(kind, strawman, attack_runs, seed);
      emit(t, markdown, out_path);
      return 0;
    }
    if (*run) {
      std::ifstream f(topology);
      auto kv = harness::parse_kv(f);
      const char* env = std::getenv("SPX_SEED");
      auto rep = harness::run_topology(kv, env && *env ? seed : 0);
      std::cout << rep.summary;
      return rep.ok ? 0 : 1;
    }
  } catch (const Error& e) {
    std::cerr << "spx: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
