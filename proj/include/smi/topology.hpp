#pragma once

// Cluster interconnect description: which network interface of which rank is
// wired to which. Stored as canonical unordered pairs; links are duplex.
//
// JSON document:
//   { "num_ranks": 8, "ifaces_per_rank": 4,
//     "connections": [ [[0,1],[1,0]], ... ] }

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "smi/errors.hpp"
#include "smi/packet.hpp"

namespace smi {

struct Endpoint {
  int rank = 0;
  int iface = 0;

  friend auto operator<=>(const Endpoint&, const Endpoint&) = default;
};

inline std::string to_string(const Endpoint& e) {
  return "(" + std::to_string(e.rank) + "," + std::to_string(e.iface) + ")";
}

class TopologySpec {
 public:
  using Connection = std::pair<Endpoint, Endpoint>;

  TopologySpec() = default;

  /// Validates and canonicalizes; throws TopologyError on any invariant violation.
  TopologySpec(int num_ranks, int ifaces_per_rank, std::vector<Connection> connections)
      : num_ranks_(num_ranks), ifaces_(ifaces_per_rank) {
    if (num_ranks < 1 || num_ranks > kMaxRanks) {
      throw TopologyError("num_ranks must be in 1.." + std::to_string(kMaxRanks));
    }
    if (ifaces_per_rank < 1 || ifaces_per_rank > 255) throw TopologyError("ifaces_per_rank must be in 1..255");
    peers_.assign(static_cast<std::size_t>(num_ranks) * ifaces_per_rank, std::nullopt);
    for (auto [a, b] : connections) {
      check_endpoint(a);
      check_endpoint(b);
      if (a == b) throw TopologyError("self-loop on endpoint " + to_string(a));
      if (b < a) std::swap(a, b);
      for (const Endpoint& e : {a, b}) {
        if (peer(e)) throw TopologyError("duplicate use of endpoint " + to_string(e));
      }
      slot(a) = b;
      slot(b) = a;
      connections_.emplace_back(a, b);
    }
    std::sort(connections_.begin(), connections_.end());
  }

  int num_ranks() const { return num_ranks_; }
  int ifaces_per_rank() const { return ifaces_; }
  const std::vector<Connection>& connections() const { return connections_; }

  /// Endpoint wired to `e`, if any.
  std::optional<Endpoint> peer(const Endpoint& e) const {
    return peers_[static_cast<std::size_t>(e.rank) * ifaces_ + e.iface];
  }

  int degree(int rank) const {
    int d = 0;
    for (int i = 0; i < ifaces_; ++i) d += peer({rank, i}).has_value() ? 1 : 0;
    return d;
  }

  friend bool operator==(const TopologySpec& a, const TopologySpec& b) {
    return a.num_ranks_ == b.num_ranks_ && a.ifaces_ == b.ifaces_ && a.connections_ == b.connections_;
  }

 private:
  void check_endpoint(const Endpoint& e) const {
    if (e.rank < 0 || e.rank >= num_ranks_) throw TopologyError("rank out of range in " + to_string(e));
    if (e.iface < 0 || e.iface >= ifaces_) throw TopologyError("iface out of range in " + to_string(e));
  }
  std::optional<Endpoint>& slot(const Endpoint& e) {
    return peers_[static_cast<std::size_t>(e.rank) * ifaces_ + e.iface];
  }

  int num_ranks_ = 0;
  int ifaces_ = 0;
  std::vector<Connection> connections_;
  std::vector<std::optional<Endpoint>> peers_;
};

inline nlohmann::json to_json(const TopologySpec& t) {
  nlohmann::json conns = nlohmann::json::array();
  for (const auto& [a, b] : t.connections()) {
    conns.push_back({{a.rank, a.iface}, {b.rank, b.iface}});
  }
  return {{"num_ranks", t.num_ranks()}, {"ifaces_per_rank", t.ifaces_per_rank()}, {"connections", conns}};
}

inline TopologySpec topology_from_json(const nlohmann::json& j) {
  try {
    std::vector<TopologySpec::Connection> conns;
    for (const auto& c : j.at("connections")) {
      if (!c.is_array() || c.size() != 2 || c[0].size() != 2 || c[1].size() != 2) {
        throw ParseError("connection entries must be [[rank, iface], [rank, iface]]");
      }
      conns.emplace_back(Endpoint{c[0][0].get<int>(), c[0][1].get<int>()},
                         Endpoint{c[1][0].get<int>(), c[1][1].get<int>()});
    }
    return TopologySpec(j.at("num_ranks").get<int>(), j.at("ifaces_per_rank").get<int>(), std::move(conns));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("topology document: ") + e.what());
  }
}

inline TopologySpec parse_topology(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("topology document: ") + e.what());
  }
  return topology_from_json(j);
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline TopologySpec load_topology(const std::string& path) { return parse_topology(read_file(path)); }

inline void save_topology(const TopologySpec& t, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << to_json(t).dump(2) << '\n';
}

/// Linear bus: rank i wired to rank i+1. Each rank uses iface 0 for its first
/// link and iface 1 for its second, so interior ranks receive from the left on
/// iface 0 and send to the right on iface 1.
inline TopologySpec make_bus(int n, int ifaces_per_rank = 4) {
  if (n < 2) throw TopologyError("bus needs at least 2 ranks");
  const int needed = n > 2 ? 2 : 1;
  if (ifaces_per_rank < needed) {
    throw TopologyError("bus of " + std::to_string(n) + " ranks needs " + std::to_string(needed) +
                        " ifaces per rank");
  }
  std::vector<TopologySpec::Connection> conns;
  for (int i = 0; i + 1 < n; ++i) conns.emplace_back(Endpoint{i, i == 0 ? 0 : 1}, Endpoint{i + 1, 0});
  return TopologySpec(n, ifaces_per_rank, std::move(conns));
}

/// 2D torus with wraparound. Iface 0/1 face west/east, 2/3 face north/south.
/// A dimension of extent 1 is not wired.
inline TopologySpec make_torus(int rows, int cols, int ifaces_per_rank = 4) {
  if (rows < 1 || cols < 1 || rows * cols < 2 || rows * cols > kMaxRanks) {
    throw TopologyError("torus shape must hold 2.." + std::to_string(kMaxRanks) + " ranks");
  }
  const int needed = (cols > 1 ? 2 : 0) + (rows > 1 ? 2 : 0);
  if (ifaces_per_rank < needed) {
    throw TopologyError("torus " + std::to_string(rows) + "x" + std::to_string(cols) + " needs " +
                        std::to_string(needed) + " ifaces per rank, have " + std::to_string(ifaces_per_rank));
  }
  const int west = 0, east = 1;
  const int north = cols > 1 ? 2 : 0, south = north + 1;
  std::vector<TopologySpec::Connection> conns;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const int me = r * cols + c;
      if (cols > 1) conns.emplace_back(Endpoint{me, east}, Endpoint{r * cols + (c + 1) % cols, west});
      if (rows > 1) conns.emplace_back(Endpoint{me, south}, Endpoint{((r + 1) % rows) * cols + c, north});
    }
  }
  return TopologySpec(rows * cols, ifaces_per_rank, std::move(conns));
}

}  // namespace smi
