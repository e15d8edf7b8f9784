#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include "smi/errors.hpp"
#include "smi/ports.hpp"
#include "smi/routing.hpp"
#include "smi/runtime.hpp"
#include "smi/topology.hpp"

namespace smi::harness {

// Port layout shared by the applications (stencil, GESUMMV) and the
// acceptance programs, so one table directory per topology serves all of them.
inline constexpr int kGesummvPort = 0;
inline constexpr int kWestPort = 1;   // receive from the west neighbour
inline constexpr int kEastPort = 2;   // receive from the east neighbour
inline constexpr int kNorthPort = 3;  // receive from the north neighbour
inline constexpr int kSouthPort = 4;  // receive from the south neighbour
inline constexpr int kGridGatherPort = 5;
inline constexpr int kBcastPort = 6;
inline constexpr int kReduceAddPort = 7;
inline constexpr int kReduceMaxPort = 8;
inline constexpr int kReduceMinPort = 9;
inline constexpr int kScatterPort = 10;
inline constexpr int kGatherPort = 11;
inline constexpr int kCharPort = 12;
inline constexpr int kShortPort = 13;
inline constexpr int kIntPort = 14;
inline constexpr int kDoublePort = 15;

inline PortSet application_ports() {
  PortSet ps;
  for (int p : {kGesummvPort, kWestPort, kEastPort, kNorthPort, kSouthPort}) ps.add({p, PortKind::kP2P, DataType::kFloat});
  ps.add({kGridGatherPort, PortKind::kGather, DataType::kFloat});
  ps.add({kBcastPort, PortKind::kBcast, DataType::kFloat});
  ps.add({kReduceAddPort, PortKind::kReduce, DataType::kFloat, ReduceOp::kAdd});
  ps.add({kReduceMaxPort, PortKind::kReduce, DataType::kFloat, ReduceOp::kMax});
  ps.add({kReduceMinPort, PortKind::kReduce, DataType::kFloat, ReduceOp::kMin});
  ps.add({kScatterPort, PortKind::kScatter, DataType::kFloat});
  ps.add({kGatherPort, PortKind::kGather, DataType::kFloat});
  ps.add({kCharPort, PortKind::kP2P, DataType::kChar});
  ps.add({kShortPort, PortKind::kP2P, DataType::kShort});
  ps.add({kIntPort, PortKind::kP2P, DataType::kInt});
  ps.add({kDoublePort, PortKind::kP2P, DataType::kDouble});
  return ps;
}

/// Throws ConfigError unless `ports` declares `port` as `kind` carrying `dtype`.
inline void require_port(const PortSet& ports, int port, PortKind kind, DataType dtype) {
  if (!ports.contains(port) || ports.at(port).kind != kind || ports.at(port).dtype != dtype) {
    throw ConfigError("port " + std::to_string(port) + " must be declared as " + std::string(to_string(kind)) + " " +
                      std::string(to_string(dtype)));
  }
}

/// Runtime with freshly generated up*/down* tables, for runs that do not go
/// through table files.
inline Runtime make_runtime(const TopologySpec& topo, const PortSet& ports, RunConfig cfg) {
  auto tables = generate_routes(topo, ports);
  return Runtime(topo, std::move(tables), ports, std::move(cfg));
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write " + path);
  return os;
}

inline void write_trace(const RunConfig& cfg, const RunReport& rep) {
  if (cfg.trace_path.empty()) return;
  auto os = open_output(cfg.trace_path);
  write_trace_csv(os, rep.trace);
}

}  // namespace smi::harness
