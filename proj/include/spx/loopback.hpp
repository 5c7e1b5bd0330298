#pragma once

// Wall-clock runner: the same Peers over TCP on 127.0.0.1, one thread per
// connection per role.

#include <string>
#include <vector>

#include "spx/scenario.hpp"

namespace spx::net {

struct LoopbackConfig {
  Protocol protocol = Protocol::Tlx;
  noise::Pattern pattern = noise::Pattern::XX;
  Mode mode = Mode::Spx;
  std::size_t connections = 1;
  Workload workload;
  // Overrides `workload`; connection i uses per_connection[i % size].
  std::vector<Workload> per_connection;
  std::size_t grant_size = core::kNaturalGrantSize;
  std::uint64_t seed = 1;
  int timeout_ms = 60'000;
};

struct LoopbackConnection {
  bool ok = false;
  std::string error;
  double handshake_s = 0;
  double total_s = 0;
  std::size_t bytes_echoed = 0;
};

struct LoopbackResult {
  std::vector<LoopbackConnection> connections;
  double wall_s = 0;
  // Thread CPU time of all edge connection threads.
  double edge_cpu_s = 0;
  // getrusage(RUSAGE_SELF) user+system over the run, all roles.
  double process_cpu_s = 0;

  bool all_ok() const;
  double mean_handshake_s() const;
  double mean_total_s() const;
};

LoopbackResult run_loopback(const LoopbackConfig& cfg);

}  // namespace spx::net
