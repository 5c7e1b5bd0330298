#pragma once

// Benchmarks in the shape of the evaluation: handshake, file transfer,
// page load, concurrency, CPU, and the overhead table. Every table is
// printed as CSV under a versioned header, or as markdown.

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "spx/loopback.hpp"
#include "spx/scenario.hpp"

namespace spx::harness {

inline constexpr int kSchemaVersion = 1;

struct Stats {
  double mean = 0;
  double stddev = 0;
  std::size_t n = 0;
};
Stats summarize(const std::vector<double>& xs);

struct Table {
  std::string kind;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  void write_csv(std::ostream& out) const;
  void write_markdown(std::ostream& out) const;
};

std::vector<std::size_t> default_sizes();

struct BenchOptions {
  net::Protocol protocol = net::Protocol::Tlx;
  noise::Pattern pattern = noise::Pattern::XX;
  std::size_t runs = 20;
  std::uint64_t seed = 1;
  std::vector<std::size_t> sizes = default_sizes();
  std::size_t grant_size = core::kNaturalGrantSize;
  // Loopback wall-clock measurements; off leaves only simulator columns.
  bool wall_clock = true;
};

Table bench_handshake(const BenchOptions& o);
Table bench_transfer(const BenchOptions& o);

struct PageSpec {
  std::vector<std::size_t> objects = std::vector<std::size_t>(50, 20 * 1024);
  std::size_t connections = 6;
};
Table bench_pageload(const BenchOptions& o, const PageSpec& page = {});

inline constexpr double kConcurrencyTolerance = 0.25;
Table bench_concurrency(const BenchOptions& o, const std::vector<std::size_t>& ns = {1, 8, 64});
Table bench_cpu(const BenchOptions& o, std::size_t connections = 16);

// Extra bytes and round trips on the edge-server leg for TLX and every
// NoiXe pattern at the given grant sizes.
Table overhead_table(std::size_t tlx_grant, std::size_t noise_grant, std::uint64_t seed = 1);

Table attack_table(net::AttackKind kind, bool strawman, std::size_t runs, std::uint64_t seed);

// key = value lines, '#' starts a comment.
std::map<std::string, std::string> parse_kv(std::istream& in);

struct RunReport {
  std::string summary;
  bool ok = false;
};
// Runs the topology described by `kv`; writes the trace to kv["trace"] if set.
RunReport run_topology(const std::map<std::string, std::string>& kv, std::uint64_t seed_override = 0);

}  // namespace spx::harness
