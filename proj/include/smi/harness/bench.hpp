#pragma once

// Microbenchmarks timed in simulated cycles. Each benchmark declares the
// ports it needs, generates up*/down* tables for its topology and checks the
// data it moved before reporting a number.
//
// Benchmark configuration file: the run configuration keys plus
//
//   "benchmark": "bandwidth" | "latency" | "injection" | "collectives",
//   "sizes": [1, 7, 700],     message sizes in elements
//   "repetitions": 4,         ping-pong round trips (latency)
//   "R_values": [1,4,8,16],   polling reads swept by the injection benchmark
//   "output": "out.csv"
//
// "topology" is optional; the defaults are bus(8) for bandwidth and latency,
// bus(2) for injection, and the built-in 4/8-rank torus and bus pairs for
// collectives.
//
// CSV schemas:
//   bandwidth   size_elems,hops,packets,cycles_per_packet,payload_bytes_per_cycle,efficiency
//   latency     hops,cycles
//   injection   R,cycles_per_packet
//   collectives kind,ranks,topology,size,cycles

#include <algorithm>
#include <cstdint>
#include <iomanip>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "smi/channel.hpp"
#include "smi/collectives.hpp"
#include "smi/config.hpp"
#include "smi/harness/common.hpp"

namespace smi::harness {

struct BenchConfig {
  std::string name;
  RunConfig run;
  std::optional<TopologySpec> topology;
  std::vector<std::size_t> sizes;
  int repetitions = 4;
  std::vector<int> r_values{1, 4, 8, 16};
  std::string output;
};

inline BenchConfig bench_config_from_json(const nlohmann::json& j, const std::filesystem::path& base = {}) {
  BenchConfig c;
  c.run = run_config_from_json(j, base);
  try {
    c.name = j.value("benchmark", std::string());
    c.sizes = j.value("sizes", std::vector<std::size_t>{});
    c.repetitions = j.value("repetitions", c.repetitions);
    c.r_values = j.value("R_values", c.r_values);
    c.output = j.value("output", std::string());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("benchmark configuration: ") + e.what());
  }
  if (!c.run.topology_path.empty()) c.topology = load_topology(c.run.topology_path);
  if (std::any_of(c.sizes.begin(), c.sizes.end(), [](std::size_t s) { return s == 0; })) {
    throw ConfigError("message sizes must be positive");
  }
  if (c.repetitions < 1) throw ConfigError("repetitions must be at least 1");
  if (c.r_values.empty() || std::any_of(c.r_values.begin(), c.r_values.end(), [](int r) { return r < 1; })) {
    throw ConfigError("R_values must be positive");
  }
  if (c.run.mode != ExecMode::kCycle) throw ConfigError("benchmarks are timed in cycles and need mode 'cycle'");
  return c;
}

inline BenchConfig load_bench_config(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("benchmark configuration: ") + e.what());
  }
  return bench_config_from_json(j, std::filesystem::path(path).parent_path());
}

namespace detail {

inline float bench_value(std::size_t i) { return static_cast<float>(i % 1000) * 0.5f; }

inline void require_hops(const TopologySpec& topo, const RoutingTables& rt, int dst, int hops) {
  if (dst >= topo.num_ranks() || hop_count(topo, rt, 0, dst) != hops) {
    throw ConfigError("hop sweep needs a bus of at least 8 ranks (rank " + std::to_string(dst) + " must be " +
                      std::to_string(hops) + " hops from rank 0)");
  }
}

}  // namespace detail

// ---------------------------------------------------------------- bandwidth

struct BandwidthRow {
  std::size_t size_elems = 0;
  int hops = 0;
  std::size_t packets = 0;
  double cycles_per_packet = 0;
  double payload_bytes_per_cycle = 0;
  double efficiency = 0;
};

/// Streams `size` floats from rank 0 to the rank `hops` links away and times
/// the packets delivered to the receiver. Steady state is measured over the
/// second half of the stream.
inline BandwidthRow measure_bandwidth(const TopologySpec& topo, RunConfig run, std::size_t size, int hops) {
  PortSet ports;
  ports.add({0, PortKind::kP2P, DataType::kFloat});
  run.trace = true;
  run.async_degree[0] = size;  // eager: the stream is limited by the fabric only
  auto tables = generate_routes(topo, ports);
  detail::require_hops(topo, tables, hops, hops);
  Runtime rt(topo, std::move(tables), ports, run);

  std::vector<Program> progs(static_cast<std::size_t>(hops + 1));
  progs[0] = [&](RankContext& c) {
    auto ch = open_send_channel<float>(c, size, hops, 0);
    for (std::size_t i = 0; i < size; ++i) ch.push(detail::bench_value(i));
  };
  progs[static_cast<std::size_t>(hops)] = [&](RankContext& c) {
    auto ch = open_recv_channel<float>(c, size, 0, 0);
    for (std::size_t i = 0; i < size; ++i) {
      if (ch.pop() != detail::bench_value(i)) throw Error("bandwidth benchmark received corrupted data");
    }
  };
  const auto rep = rt.run(progs);

  std::vector<std::uint64_t> arrivals;
  for (const auto& e : rep.trace) {
    if (e.unit == UnitKind::kApp && e.kind == TraceKind::kDeliver && e.rank == hops) arrivals.push_back(e.cycle);
  }
  BandwidthRow row;
  row.size_elems = size;
  row.hops = hops;
  row.packets = arrivals.size();
  if (arrivals.size() >= 2) {
    const std::size_t a = std::min(arrivals.size() / 2, arrivals.size() - 2);
    const std::size_t b = arrivals.size() - 1;
    row.cycles_per_packet = static_cast<double>(arrivals[b] - arrivals[a]) / static_cast<double>(b - a);
  } else {
    row.cycles_per_packet = static_cast<double>(rep.cycles);
  }
  const double payload = static_cast<double>(size * sizeof(float));
  row.efficiency = payload / static_cast<double>(kPacketBytes * row.packets);
  row.payload_bytes_per_cycle = payload / static_cast<double>(row.packets) / row.cycles_per_packet;
  return row;
}

inline std::vector<BandwidthRow> bench_bandwidth(const BenchConfig& cfg) {
  const TopologySpec topo = cfg.topology.value_or(make_bus(8));
  const auto sizes = cfg.sizes.empty() ? std::vector<std::size_t>{1, 7, 700, 7000} : cfg.sizes;
  std::vector<BandwidthRow> rows;
  for (std::size_t s : sizes) {
    for (int h : {1, 4, 7}) rows.push_back(measure_bandwidth(topo, cfg.run, s, h));
  }
  return rows;
}

// ------------------------------------------------------------------ latency

struct LatencyRow {
  int hops = 0;
  double cycles = 0;
};

/// Half the average round trip of a one-element ping-pong between rank 0
/// (port 0 out, port 1 back) and `peer`. With peer 0 both ends live on rank 0
/// and the message loops back through the local CK units.
inline LatencyRow measure_latency(const TopologySpec& topo, RunConfig run, int peer, int repetitions) {
  PortSet ports;
  ports.add({0, PortKind::kP2P, DataType::kFloat});
  ports.add({1, PortKind::kP2P, DataType::kFloat});
  auto tables = generate_routes(topo, ports);
  const int hops = peer == 0 ? 0 : hop_count(topo, tables, 0, peer);
  Runtime rt(topo, std::move(tables), ports, run);

  std::uint64_t start = 0, end = 0;
  std::vector<Program> progs(static_cast<std::size_t>(peer + 1));
  if (peer == 0) {
    progs[0] = [&](RankContext& c) {
      start = c.now();
      for (int i = 0; i < repetitions; ++i) {
        const float v = static_cast<float>(i);
        open_send_channel<float>(c, 1, 0, 0).push(v);
        const float got = open_recv_channel<float>(c, 1, 0, 0).pop();
        open_send_channel<float>(c, 1, 0, 1).push(got + 1);
        if (open_recv_channel<float>(c, 1, 0, 1).pop() != v + 1) throw Error("latency benchmark: bad pong");
      }
      end = c.now();
    };
  } else {
    progs[0] = [&](RankContext& c) {
      start = c.now();
      for (int i = 0; i < repetitions; ++i) {
        const float v = static_cast<float>(i);
        open_send_channel<float>(c, 1, peer, 0).push(v);
        if (open_recv_channel<float>(c, 1, peer, 1).pop() != v + 1) throw Error("latency benchmark: bad pong");
      }
      end = c.now();
    };
    progs[static_cast<std::size_t>(peer)] = [&](RankContext& c) {
      for (int i = 0; i < repetitions; ++i) {
        const float v = open_recv_channel<float>(c, 1, 0, 0).pop();
        open_send_channel<float>(c, 1, 0, 1).push(v + 1);
      }
    };
  }
  rt.run(progs);
  return {hops, static_cast<double>(end - start) / (2.0 * repetitions)};
}

inline std::vector<LatencyRow> bench_latency(const BenchConfig& cfg) {
  const TopologySpec topo = cfg.topology.value_or(make_bus(8));
  std::vector<LatencyRow> rows;
  for (int h : {1, 4, 7}) {
    PortSet probe;
    probe.add({0, PortKind::kP2P, DataType::kFloat});
    detail::require_hops(topo, generate_routes(topo, probe), h, h);
    rows.push_back(measure_latency(topo, cfg.run, h, cfg.repetitions));
  }
  return rows;
}

// ---------------------------------------------------------------- injection

struct InjectionRow {
  int polling_reads = 0;
  double cycles_per_packet = 0;
};

/// Cycles between two packets accepted by CK_S 0 of rank 0 from its
/// application input, with rank 0 streaming to rank 1 and nothing else
/// running. Measured over whole polling rounds in steady state.
inline InjectionRow measure_injection(const TopologySpec& topo, RunConfig run, int polling_reads) {
  PortSet ports;
  ports.add({0, PortKind::kP2P, DataType::kFloat});
  run.polling_reads = polling_reads;
  run.trace = true;
  const std::size_t packets = static_cast<std::size_t>(std::max(64, 16 * polling_reads));
  const std::size_t size = packets * max_elems_v<float>;
  run.async_degree[0] = size;
  auto tables = generate_routes(topo, ports);
  if (topo.num_ranks() < 2 || tables.at(0, 0).cks[1].action != CksAction::kEmitIface ||
      tables.at(0, 0).cks[1].arg != 0) {
    throw ConfigError("injection benchmark needs rank 1 wired to interface 0 of rank 0");
  }
  Runtime rt(topo, std::move(tables), ports, run);
  std::vector<Program> progs(2);
  progs[0] = [&](RankContext& c) {
    auto ch = open_send_channel<float>(c, size, 1, 0);
    for (std::size_t i = 0; i < size; ++i) ch.push(detail::bench_value(i));
  };
  progs[1] = [&](RankContext& c) {
    auto ch = open_recv_channel<float>(c, size, 0, 0);
    for (std::size_t i = 0; i < size; ++i) {
      if (ch.pop() != detail::bench_value(i)) throw Error("injection benchmark received corrupted data");
    }
  };
  const auto rep = rt.run(progs);
  std::vector<std::uint64_t> accepts;
  for (const auto& e : rep.trace) {
    if (e.unit == UnitKind::kCkS && e.rank == 0 && e.index == 0 && e.input == 0 && e.kind == TraceKind::kAccept) {
      accepts.push_back(e.cycle);
    }
  }
  const std::size_t r = static_cast<std::size_t>(polling_reads);
  const std::size_t rounds = accepts.size() / r / 2;
  const std::size_t a = accepts.size() / 4;
  const std::size_t b = a + rounds * r;
  if (rounds == 0 || b >= accepts.size()) throw Error("injection benchmark: too few accepted packets");
  return {polling_reads, static_cast<double>(accepts[b] - accepts[a]) / static_cast<double>(b - a)};
}

inline std::vector<InjectionRow> bench_injection(const BenchConfig& cfg) {
  const TopologySpec topo = cfg.topology.value_or(make_bus(2));
  std::vector<InjectionRow> rows;
  for (int r : cfg.r_values) rows.push_back(measure_injection(topo, cfg.run, r));
  return rows;
}

// -------------------------------------------------------------- collectives

struct CollectiveRow {
  std::string kind;
  int ranks = 0;
  std::string topology;
  std::size_t size = 0;
  std::uint64_t cycles = 0;
};

/// Cycles for one Bcast or Reduce(ADD) of `size` floats rooted at rank 0
/// over all ranks of `topo`. Results are checked against a sequential fold.
inline std::uint64_t measure_collective(const TopologySpec& topo, RunConfig run, PortKind kind, std::size_t size) {
  PortSet ports;
  ports.add({0, PortKind::kBcast, DataType::kFloat});
  ports.add({1, PortKind::kReduce, DataType::kFloat, ReduceOp::kAdd});
  Runtime rt = make_runtime(topo, ports, run);
  const int n = topo.num_ranks();
  auto contribution = [](int rank, std::size_t i) { return static_cast<float>((rank * 131 + static_cast<int>(i)) % 97); };
  const auto rep = rt.run_spmd([&](RankContext& c) {
    if (kind == PortKind::kBcast) {
      auto ch = open_bcast_channel<float>(c, size, 0, 0, c.world());
      for (std::size_t i = 0; i < size; ++i) {
        float v = c.rank() == 0 ? detail::bench_value(i) : -1.0f;
        ch.bcast(v);
        if (v != detail::bench_value(i)) throw Error("broadcast benchmark delivered a wrong element");
      }
    } else {
      auto ch = open_reduce_channel<float>(c, size, ReduceOp::kAdd, 1, 0, c.world());
      for (std::size_t i = 0; i < size; ++i) {
        float out = 0;
        ch.reduce(contribution(c.rank(), i), out);
        if (c.rank() != 0) continue;
        float want = contribution(0, i);
        for (int r = 1; r < n; ++r) want += contribution(r, i);
        if (out != want) throw Error("reduce benchmark produced a wrong element");
      }
    }
  });
  return rep.cycles;
}

inline std::vector<CollectiveRow> bench_collectives(const BenchConfig& cfg) {
  std::vector<std::pair<std::string, TopologySpec>> topos;
  if (cfg.topology) {
    topos.emplace_back("configured", *cfg.topology);
  } else {
    topos.emplace_back("torus2x2", make_torus(2, 2));
    topos.emplace_back("bus4", make_bus(4));
    topos.emplace_back("torus2x4", make_torus(2, 4));
    topos.emplace_back("bus8", make_bus(8));
  }
  const auto sizes = cfg.sizes.empty() ? std::vector<std::size_t>{1, 16, 128, 1024} : cfg.sizes;
  std::vector<CollectiveRow> rows;
  for (PortKind kind : {PortKind::kBcast, PortKind::kReduce}) {
    for (const auto& [name, topo] : topos) {
      for (std::size_t s : sizes) {
        rows.push_back({std::string(to_string(kind)), topo.num_ranks(), name, s,
                        measure_collective(topo, cfg.run, kind, s)});
      }
    }
  }
  return rows;
}

// ---------------------------------------------------------------------- CSV

inline void write_csv(std::ostream& os, const std::vector<BandwidthRow>& rows) {
  os << "size_elems,hops,packets,cycles_per_packet,payload_bytes_per_cycle,efficiency\n";
  os << std::setprecision(6);
  for (const auto& r : rows) {
    os << r.size_elems << ',' << r.hops << ',' << r.packets << ',' << r.cycles_per_packet << ','
       << r.payload_bytes_per_cycle << ',' << r.efficiency << '\n';
  }
}

inline void write_csv(std::ostream& os, const std::vector<LatencyRow>& rows) {
  os << "hops,cycles\n";
  os << std::setprecision(6);
  for (const auto& r : rows) os << r.hops << ',' << r.cycles << '\n';
}

inline void write_csv(std::ostream& os, const std::vector<InjectionRow>& rows) {
  os << "R,cycles_per_packet\n";
  os << std::setprecision(6);
  for (const auto& r : rows) os << r.polling_reads << ',' << r.cycles_per_packet << '\n';
}

inline void write_csv(std::ostream& os, const std::vector<CollectiveRow>& rows) {
  os << "kind,ranks,topology,size,cycles\n";
  for (const auto& r : rows) os << r.kind << ',' << r.ranks << ',' << r.topology << ',' << r.size << ',' << r.cycles << '\n';
}

/// Runs the benchmark named in `cfg` and writes its CSV to `os`.
inline void run_benchmark(const BenchConfig& cfg, std::ostream& os) {
  if (cfg.name == "bandwidth") {
    write_csv(os, bench_bandwidth(cfg));
  } else if (cfg.name == "latency") {
    write_csv(os, bench_latency(cfg));
  } else if (cfg.name == "injection") {
    write_csv(os, bench_injection(cfg));
  } else if (cfg.name == "collectives") {
    write_csv(os, bench_collectives(cfg));
  } else {
    throw ConfigError("unknown benchmark '" + cfg.name + "' (bandwidth, latency, injection, collectives)");
  }
}

}  // namespace smi::harness
