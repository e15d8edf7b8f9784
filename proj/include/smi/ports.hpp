#pragma once

// Port declarations: every port a program uses is known before the run. The
// declaration fixes the port's kind, element type and (for Reduce) operator,
// so peers cannot disagree on them.
//
//   { "ports": [ {"port": 0, "type": "p2p", "dtype": "int"},
//                {"port": 5, "type": "reduce", "dtype": "float", "op": "add"} ] }

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "smi/errors.hpp"
#include "smi/packet.hpp"
#include "smi/topology.hpp"

namespace smi {

enum class PortKind : std::uint8_t { kP2P, kBcast, kReduce, kScatter, kGather };
enum class ReduceOp : std::uint8_t { kAdd, kMax, kMin };

constexpr std::string_view to_string(PortKind k) {
  switch (k) {
    case PortKind::kP2P: return "p2p";
    case PortKind::kBcast: return "bcast";
    case PortKind::kReduce: return "reduce";
    case PortKind::kScatter: return "scatter";
    case PortKind::kGather: return "gather";
  }
  return "?";
}

constexpr std::string_view to_string(ReduceOp op) {
  switch (op) {
    case ReduceOp::kAdd: return "add";
    case ReduceOp::kMax: return "max";
    case ReduceOp::kMin: return "min";
  }
  return "?";
}

inline PortKind parse_port_kind(std::string_view s) {
  for (auto k : {PortKind::kP2P, PortKind::kBcast, PortKind::kReduce, PortKind::kScatter, PortKind::kGather}) {
    if (to_string(k) == s) return k;
  }
  throw ParseError("unknown port type '" + std::string(s) + "'");
}

inline ReduceOp parse_reduce_op(std::string_view s) {
  for (auto op : {ReduceOp::kAdd, ReduceOp::kMax, ReduceOp::kMin}) {
    if (to_string(op) == s) return op;
  }
  throw ParseError("unknown reduce op '" + std::string(s) + "'");
}

struct PortDecl {
  int port = 0;
  PortKind kind = PortKind::kP2P;
  DataType dtype = DataType::kInt;
  ReduceOp op = ReduceOp::kAdd;  // meaningful for kReduce only

  friend bool operator==(const PortDecl&, const PortDecl&) = default;
};

class PortSet {
 public:
  PortSet() = default;
  explicit PortSet(std::vector<PortDecl> decls) {
    for (const auto& d : decls) add(d);
  }

  PortSet& add(const PortDecl& d) {
    if (d.port < 0 || d.port >= kMaxPorts) throw ConfigError("port " + std::to_string(d.port) + " out of range");
    if (!decls_.emplace(d.port, d).second) throw ConfigError("port " + std::to_string(d.port) + " declared twice");
    return *this;
  }

  const PortDecl* find(int port) const {
    auto it = decls_.find(port);
    return it == decls_.end() ? nullptr : &it->second;
  }
  const PortDecl& at(int port) const {
    if (auto* d = find(port)) return *d;
    throw ConfigError("port " + std::to_string(port) + " is not declared");
  }
  bool contains(int port) const { return decls_.count(port) != 0; }
  std::size_t size() const { return decls_.size(); }
  auto begin() const { return decls_.begin(); }
  auto end() const { return decls_.end(); }

 private:
  std::map<int, PortDecl> decls_;
};

/// CK pair (network interface index) that serves `port` on every rank.
constexpr int pair_for_port(int port, int ifaces_per_rank) { return port % ifaces_per_rank; }

inline nlohmann::json to_json(const PortSet& ports) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& [p, d] : ports) {
    nlohmann::json e = {{"port", p}, {"type", to_string(d.kind)}, {"dtype", to_string(d.dtype)}};
    if (d.kind == PortKind::kReduce) e["op"] = to_string(d.op);
    arr.push_back(std::move(e));
  }
  return {{"ports", arr}};
}

inline PortSet ports_from_json(const nlohmann::json& j) {
  try {
    PortSet set;
    for (const auto& e : j.at("ports")) {
      PortDecl d;
      d.port = e.at("port").get<int>();
      d.kind = parse_port_kind(e.at("type").get<std::string>());
      d.dtype = parse_data_type(e.at("dtype").get<std::string>());
      if (d.kind == PortKind::kReduce) d.op = parse_reduce_op(e.value("op", std::string("add")));
      set.add(d);
    }
    return set;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("port declaration: ") + e.what());
  }
}

inline PortSet load_ports(const std::string& path) {
  try {
    return ports_from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("port declaration: ") + e.what());
  }
}

}  // namespace smi
