#pragma once

// Run configuration file:
//
// {
//   "mode": "cycle" | "concurrent",
//   "R": 1,                       polling reads per input
//   "fifo_capacity": 16,          packets, internal and application FIFOs
//   "link_capacity": 16,          packets per link direction
//   "link_latency": 1,            cycles per link traversal
//   "reduce_tile": 16,            Reduce credits C, in elements
//   "k": { "0": 14 },             asynchronicity degree per port, in elements
//   "idle_cycles": 100000,        cycle-mode watchdog
//   "idle_ms": 2000,              concurrent-mode watchdog
//   "workers": 2,                 forwarding threads in concurrent mode
//   "topology": "topo.json", "tables": "tables/", "ports": "ports.json",
//   "trace": "trace.csv"          optional
// }
//
// Relative paths resolve against the configuration file's directory.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "smi/errors.hpp"
#include "smi/topology.hpp"

namespace smi {

enum class ExecMode { kCycle, kConcurrent };

struct RunConfig {
  ExecMode mode = ExecMode::kCycle;
  int polling_reads = 1;
  std::size_t fifo_capacity = 16;
  std::size_t link_capacity = 16;
  std::uint64_t link_latency = 1;
  std::size_t reduce_tile = 16;
  std::map<int, std::size_t> async_degree;
  std::uint64_t idle_cycles = 100000;
  std::uint64_t idle_ms = 2000;
  int workers = 2;
  bool trace = false;

  std::string topology_path;
  std::string tables_path;
  std::string ports_path;
  std::string trace_path;
};

inline RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base = {}) {
  RunConfig c;
  auto resolve = [&](const std::string& p) {
    if (p.empty()) return p;
    std::filesystem::path fp(p);
    return fp.is_absolute() || base.empty() ? p : (base / fp).string();
  };
  try {
    const auto mode = j.value("mode", std::string("cycle"));
    if (mode == "cycle") {
      c.mode = ExecMode::kCycle;
    } else if (mode == "concurrent") {
      c.mode = ExecMode::kConcurrent;
    } else {
      throw ConfigError("mode must be 'cycle' or 'concurrent'");
    }
    c.polling_reads = j.value("R", c.polling_reads);
    c.fifo_capacity = j.value("fifo_capacity", c.fifo_capacity);
    c.link_capacity = j.value("link_capacity", c.link_capacity);
    c.link_latency = j.value("link_latency", c.link_latency);
    c.reduce_tile = j.value("reduce_tile", c.reduce_tile);
    c.idle_cycles = j.value("idle_cycles", c.idle_cycles);
    c.idle_ms = j.value("idle_ms", c.idle_ms);
    c.workers = j.value("workers", c.workers);
    if (j.contains("k")) {
      for (const auto& [port, k] : j.at("k").items()) c.async_degree[std::stoi(port)] = k.get<std::size_t>();
    }
    c.topology_path = resolve(j.value("topology", std::string()));
    c.tables_path = resolve(j.value("tables", std::string()));
    c.ports_path = resolve(j.value("ports", std::string()));
    c.trace_path = resolve(j.value("trace", std::string()));
    c.trace = !c.trace_path.empty() || j.value("trace_enabled", false);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("run configuration: ") + e.what());
  } catch (const std::invalid_argument&) {
    throw ParseError("run configuration: port keys in 'k' must be integers");
  }
  if (c.polling_reads < 1) throw ConfigError("R must be positive");
  if (c.fifo_capacity < 1 || c.link_capacity < 1) throw ConfigError("capacities must be positive");
  if (c.reduce_tile < 1) throw ConfigError("reduce_tile must be positive");
  if (c.workers < 1) throw ConfigError("workers must be positive");
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("run configuration: ") + e.what());
  }
  return run_config_from_json(j, std::filesystem::path(path).parent_path());
}

}  // namespace smi
