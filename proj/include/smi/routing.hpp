#pragma once

// Static route generation and the per-rank routing tables consumed by the
// CK_S / CK_R forwarding units.
//
// A CK_S table is indexed by destination rank, a CK_R table by port. Tables
// are generated offline from a TopologySpec and loaded at runtime, so moving
// to a different interconnect only changes these files.

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "smi/errors.hpp"
#include "smi/packet.hpp"
#include "smi/ports.hpp"
#include "smi/topology.hpp"

namespace smi {

enum class CksAction : std::uint8_t { kDeliverLocal = 0, kForwardLocalCks = 1, kEmitIface = 2 };
enum class CkrAction : std::uint8_t { kToApp = 0, kForwardLocalCkr = 1, kNone = 0xFF };

struct CksEntry {
  CksAction action = CksAction::kDeliverLocal;
  std::uint8_t arg = 0;
  friend bool operator==(const CksEntry&, const CksEntry&) = default;
};

struct CkrEntry {
  CkrAction action = CkrAction::kNone;
  std::uint8_t arg = 0;
  friend bool operator==(const CkrEntry&, const CkrEntry&) = default;
};

using CksTable = std::vector<CksEntry>;           // by destination rank
using CkrTable = std::array<CkrEntry, kMaxPorts>;  // by port

struct PairTables {
  CksTable cks;
  CkrTable ckr{};
  friend bool operator==(const PairTables&, const PairTables&) = default;
};

class RoutingTables {
 public:
  RoutingTables() = default;
  RoutingTables(int num_ranks, int ifaces_per_rank)
      : num_ranks_(num_ranks),
        ifaces_(ifaces_per_rank),
        pairs_(static_cast<std::size_t>(num_ranks) * ifaces_per_rank,
               PairTables{CksTable(static_cast<std::size_t>(num_ranks)), CkrTable{}}) {}

  int num_ranks() const { return num_ranks_; }
  int ifaces_per_rank() const { return ifaces_; }

  PairTables& at(int rank, int iface) { return pairs_[index(rank, iface)]; }
  const PairTables& at(int rank, int iface) const { return pairs_[index(rank, iface)]; }

  friend bool operator==(const RoutingTables&, const RoutingTables&) = default;

 private:
  std::size_t index(int rank, int iface) const {
    if (rank < 0 || rank >= num_ranks_ || iface < 0 || iface >= ifaces_) {
      throw RoutingError("no tables for rank " + std::to_string(rank) + " iface " + std::to_string(iface));
    }
    return static_cast<std::size_t>(rank) * ifaces_ + iface;
  }

  int num_ranks_ = 0;
  int ifaces_ = 0;
  std::vector<PairTables> pairs_;
};

enum class RoutingScheme {
  kUpDown,        // up*/down* on a BFS spanning tree rooted at rank 0 (deadlock-free)
  kShortestPath,  // plain BFS shortest paths, lowest iface first (may deadlock)
};

namespace detail {

struct Neighbor {
  int iface;
  int rank;
};

inline std::vector<std::vector<Neighbor>> adjacency(const TopologySpec& t) {
  std::vector<std::vector<Neighbor>> adj(static_cast<std::size_t>(t.num_ranks()));
  for (int r = 0; r < t.num_ranks(); ++r) {
    for (int i = 0; i < t.ifaces_per_rank(); ++i) {
      if (auto p = t.peer({r, i}); p && p->rank != r) adj[r].push_back({i, p->rank});
    }
  }
  return adj;
}

inline constexpr int kUnreached = std::numeric_limits<int>::max();

inline std::vector<int> bfs_levels(const std::vector<std::vector<Neighbor>>& adj, int root) {
  std::vector<int> level(adj.size(), kUnreached);
  std::deque<int> q{root};
  level[root] = 0;
  while (!q.empty()) {
    const int m = q.front();
    q.pop_front();
    for (const auto& n : adj[m]) {
      if (level[n.rank] == kUnreached) {
        level[n.rank] = level[m] + 1;
        q.push_back(n.rank);
      }
    }
  }
  return level;
}

inline void fill_port_tables(RoutingTables& rt, const PortSet& ports) {
  const int n_if = rt.ifaces_per_rank();
  for (int r = 0; r < rt.num_ranks(); ++r) {
    for (int j = 0; j < n_if; ++j) {
      auto& ckr = rt.at(r, j).ckr;
      for (const auto& [p, decl] : ports) {
        const int owner = pair_for_port(p, n_if);
        ckr[p] = owner == j ? CkrEntry{CkrAction::kToApp, 0}
                            : CkrEntry{CkrAction::kForwardLocalCkr, static_cast<std::uint8_t>(owner)};
      }
    }
  }
}

// next_iface[m][d] -> tables.
inline RoutingTables tables_from_next_hops(const TopologySpec& t, const std::vector<std::vector<int>>& next_iface,
                                           const PortSet& ports) {
  RoutingTables rt(t.num_ranks(), t.ifaces_per_rank());
  for (int m = 0; m < t.num_ranks(); ++m) {
    for (int j = 0; j < t.ifaces_per_rank(); ++j) {
      auto& cks = rt.at(m, j).cks;
      for (int d = 0; d < t.num_ranks(); ++d) {
        if (d == m) {
          cks[d] = {CksAction::kDeliverLocal, 0};
          continue;
        }
        const int o = next_iface[m][d];
        cks[d] = o == j ? CksEntry{CksAction::kEmitIface, 0}
                        : CksEntry{CksAction::kForwardLocalCks, static_cast<std::uint8_t>(o)};
      }
    }
  }
  fill_port_tables(rt, ports);
  return rt;
}

}  // namespace detail

/// Generates routing tables for `t`. Ports are assigned to CK pairs by
/// pair_for_port(). Throws RoutingError listing unreachable pairs when the
/// topology is disconnected.
inline RoutingTables generate_routes(const TopologySpec& t, const PortSet& ports,
                                     RoutingScheme scheme = RoutingScheme::kUpDown) {
  using detail::kUnreached;
  const int n = t.num_ranks();
  const auto adj = detail::adjacency(t);

  const auto from_root = detail::bfs_levels(adj, 0);
  if (std::any_of(from_root.begin(), from_root.end(), [](int l) { return l == kUnreached; })) {
    std::string msg = "topology is disconnected; unreachable pairs:";
    int listed = 0, total = 0;
    for (int s = 0; s < n; ++s) {
      const auto lv = detail::bfs_levels(adj, s);
      for (int d = 0; d < n; ++d) {
        if (lv[d] != kUnreached) continue;
        ++total;
        if (listed < 32) {
          msg += " (" + std::to_string(s) + "->" + std::to_string(d) + ")";
          ++listed;
        }
      }
    }
    if (total > listed) msg += " ... (" + std::to_string(total) + " total)";
    throw RoutingError(msg);
  }

  std::vector<std::vector<int>> next(static_cast<std::size_t>(n), std::vector<int>(static_cast<std::size_t>(n), -1));

  if (scheme == RoutingScheme::kShortestPath) {
    for (int d = 0; d < n; ++d) {
      const auto dist = detail::bfs_levels(adj, d);
      for (int m = 0; m < n; ++m) {
        if (m == d) continue;
        for (const auto& nb : adj[m]) {
          if (dist[nb.rank] == dist[m] - 1) {
            next[m][d] = nb.iface;
            break;
          }
        }
      }
    }
    return detail::tables_from_next_hops(t, next, ports);
  }

  // up*/down*: a link m->x goes "down" when x is further from the root,
  // ordered by (BFS level, rank). Legal routes take zero or more up links
  // followed by zero or more down links, so no down->up turn ever occurs.
  auto key_less = [&](int a, int b) {
    return from_root[a] != from_root[b] ? from_root[a] < from_root[b] : a < b;
  };
  std::vector<int> by_key(static_cast<std::size_t>(n));
  std::iota(by_key.begin(), by_key.end(), 0);
  std::sort(by_key.begin(), by_key.end(), key_less);

  for (int d = 0; d < n; ++d) {
    // Shortest down-only distance to d.
    std::vector<int> down(static_cast<std::size_t>(n), kUnreached);
    down[d] = 0;
    std::deque<int> q{d};
    while (!q.empty()) {
      const int x = q.front();
      q.pop_front();
      for (const auto& nb : adj[x]) {
        const int m = nb.rank;
        if (key_less(m, x) && down[m] == kUnreached) {
          down[m] = down[x] + 1;
          q.push_back(m);
        }
      }
    }
    // Shortest legal (up* then down*) distance; up neighbours precede in key order.
    std::vector<int> legal(static_cast<std::size_t>(n), kUnreached);
    for (int m : by_key) {
      int best = down[m];
      for (const auto& nb : adj[m]) {
        if (key_less(nb.rank, m) && legal[nb.rank] != kUnreached) best = std::min(best, legal[nb.rank] + 1);
      }
      legal[m] = best;
    }
    for (int m = 0; m < n; ++m) {
      if (m == d) continue;
      // Once a down-only path exists every packet takes it, so a packet that
      // already turned down never needs an up link again.
      for (const auto& nb : adj[m]) {
        const bool ok = down[m] != kUnreached
                            ? key_less(m, nb.rank) && down[nb.rank] == down[m] - 1
                            : key_less(nb.rank, m) && legal[nb.rank] == legal[m] - 1;
        if (ok) {
          next[m][d] = nb.iface;
          break;
        }
      }
      if (next[m][d] < 0) throw RoutingError("internal: no next hop from " + std::to_string(m));
    }
  }
  return detail::tables_from_next_hops(t, next, ports);
}

/// The directed network links (identified by their sending endpoint) a packet
/// traverses from `src` to `dst` when injected at CK_S `start_pair` of `src`.
inline std::vector<Endpoint> walk_route(const TopologySpec& t, const RoutingTables& rt, int src, int dst,
                                        int start_pair = 0) {
  std::vector<Endpoint> links;
  int rank = src, pair = start_pair;
  int local_forwards = 0;
  while (rank != dst) {
    const CksEntry e = rt.at(rank, pair).cks.at(static_cast<std::size_t>(dst));
    switch (e.action) {
      case CksAction::kDeliverLocal:
        throw RoutingError("rank " + std::to_string(rank) + " delivers locally a packet for " + std::to_string(dst));
      case CksAction::kForwardLocalCks:
        if (++local_forwards > t.ifaces_per_rank()) {
          throw RoutingError("local forwarding loop at rank " + std::to_string(rank));
        }
        pair = e.arg;
        break;
      case CksAction::kEmitIface: {
        const auto peer = t.peer({rank, pair});
        if (!peer) {
          throw RoutingError("rank " + std::to_string(rank) + " emits on unwired iface " + std::to_string(pair));
        }
        links.push_back({rank, pair});
        if (static_cast<int>(links.size()) > t.num_ranks()) {
          throw RoutingError("routing loop from " + std::to_string(src) + " to " + std::to_string(dst));
        }
        rank = peer->rank;
        pair = peer->iface;
        local_forwards = 0;
        break;
      }
    }
  }
  return links;
}

inline int hop_count(const TopologySpec& t, const RoutingTables& rt, int src, int dst, int start_pair = 0) {
  return static_cast<int>(walk_route(t, rt, src, dst, start_pair).size());
}

struct DeadlockReport {
  bool acyclic = false;
  std::vector<Endpoint> order;  // topological order of the channel-dependency graph
  std::vector<Endpoint> cycle;  // a dependency cycle when !acyclic
};

/// Builds the channel-dependency graph (link -> next link, for every route from
/// every CK_S) and returns a topological order or one cycle.
inline DeadlockReport check_deadlock_free(const TopologySpec& t, const RoutingTables& rt) {
  const int n_if = t.ifaces_per_rank();
  const auto id = [&](const Endpoint& e) { return e.rank * n_if + e.iface; };
  const auto total = static_cast<std::size_t>(t.num_ranks() * n_if);
  std::vector<std::set<int>> succ(total);
  std::vector<bool> used(total, false);
  for (int s = 0; s < t.num_ranks(); ++s) {
    for (int d = 0; d < t.num_ranks(); ++d) {
      if (s == d) continue;
      for (int j = 0; j < n_if; ++j) {
        const auto links = walk_route(t, rt, s, d, j);
        for (std::size_t k = 0; k < links.size(); ++k) {
          used[id(links[k])] = true;
          if (k + 1 < links.size()) succ[id(links[k])].insert(id(links[k + 1]));
        }
      }
    }
  }
  const auto endpoint_of = [&](int v) { return Endpoint{v / n_if, v % n_if}; };

  std::vector<int> indeg(total, 0);
  for (const auto& s : succ) {
    for (int v : s) ++indeg[v];
  }
  DeadlockReport rep;
  std::deque<int> q;
  for (std::size_t v = 0; v < total; ++v) {
    if (used[v] && indeg[v] == 0) q.push_back(static_cast<int>(v));
  }
  std::size_t n_used = static_cast<std::size_t>(std::count(used.begin(), used.end(), true));
  while (!q.empty()) {
    const int v = q.front();
    q.pop_front();
    rep.order.push_back(endpoint_of(v));
    for (int w : succ[v]) {
      if (--indeg[w] == 0) q.push_back(w);
    }
  }
  if (rep.order.size() == n_used) {
    rep.acyclic = true;
    return rep;
  }
  // Every remaining vertex has a remaining predecessor; walking predecessors
  // from any of them must revisit a vertex.
  std::vector<std::vector<int>> pred(total);
  for (std::size_t v = 0; v < total; ++v) {
    for (int w : succ[v]) {
      if (indeg[w] > 0 && indeg[v] > 0) pred[w].push_back(static_cast<int>(v));
    }
  }
  int v = -1;
  for (std::size_t u = 0; u < total; ++u) {
    if (indeg[u] > 0) {
      v = static_cast<int>(u);
      break;
    }
  }
  std::vector<int> seen_at(total, -1);
  std::vector<int> path;
  while (seen_at[v] < 0) {
    seen_at[v] = static_cast<int>(path.size());
    path.push_back(v);
    v = pred[v].front();
  }
  for (std::size_t k = path.size(); k-- > static_cast<std::size_t>(seen_at[v]);) {
    rep.cycle.push_back(endpoint_of(path[k]));
  }
  rep.order.clear();
  return rep;
}

// Binary table files: one per rank, "rank_NNN.smirt".
//   8 bytes  magic "SMIRT\0" + version (u16 LE)
//   u16 rank, u16 num_ranks, u8 ifaces, u8 reserved        (little-endian)
//   per iface: num_ranks x (code, arg) CK_S entries, then 256 x (code, arg) CK_R entries
inline constexpr std::array<std::uint8_t, 6> kTableMagic = {'S', 'M', 'I', 'R', 'T', 0};
inline constexpr std::uint16_t kTableVersion = 1;

inline std::vector<std::uint8_t> encode_rank_tables(const RoutingTables& rt, int rank) {
  std::vector<std::uint8_t> out(kTableMagic.begin(), kTableMagic.end());
  auto put16 = [&](unsigned v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
  };
  put16(kTableVersion);
  put16(static_cast<unsigned>(rank));
  put16(static_cast<unsigned>(rt.num_ranks()));
  out.push_back(static_cast<std::uint8_t>(rt.ifaces_per_rank()));
  out.push_back(0);
  for (int j = 0; j < rt.ifaces_per_rank(); ++j) {
    const auto& pt = rt.at(rank, j);
    for (const auto& e : pt.cks) {
      out.push_back(static_cast<std::uint8_t>(e.action));
      out.push_back(e.arg);
    }
    for (const auto& e : pt.ckr) {
      out.push_back(static_cast<std::uint8_t>(e.action));
      out.push_back(e.arg);
    }
  }
  return out;
}

struct RankTableHeader {
  int rank;
  int num_ranks;
  int ifaces;
};

inline RankTableHeader decode_rank_header(std::span<const std::uint8_t> b) {
  if (b.size() < 14 || !std::equal(kTableMagic.begin(), kTableMagic.end(), b.begin())) {
    throw ParseError("routing table: bad magic");
  }
  auto get16 = [&](std::size_t off) { return static_cast<int>(b[off] | (b[off + 1] << 8)); };
  if (get16(6) != kTableVersion) throw ParseError("routing table: unsupported version " + std::to_string(get16(6)));
  return {get16(8), get16(10), b[12]};
}

/// Decodes one rank's file into `rt` (which must already have the right shape).
inline void decode_rank_tables(std::span<const std::uint8_t> b, RoutingTables& rt) {
  const auto h = decode_rank_header(b);
  if (h.num_ranks != rt.num_ranks() || h.ifaces != rt.ifaces_per_rank()) {
    throw ParseError("routing table: shape mismatch for rank " + std::to_string(h.rank));
  }
  const std::size_t expected = 14 + static_cast<std::size_t>(h.ifaces) * 2 * (h.num_ranks + kMaxPorts);
  if (b.size() != expected) throw ParseError("routing table: truncated or oversized file");
  std::size_t off = 14;
  for (int j = 0; j < h.ifaces; ++j) {
    auto& pt = rt.at(h.rank, j);
    for (auto& e : pt.cks) {
      if (b[off] > 2) throw ParseError("routing table: bad CK_S action code");
      e = {static_cast<CksAction>(b[off]), b[off + 1]};
      off += 2;
    }
    for (auto& e : pt.ckr) {
      if (b[off] > 1 && b[off] != 0xFF) throw ParseError("routing table: bad CK_R action code");
      e = {static_cast<CkrAction>(b[off]), b[off + 1]};
      off += 2;
    }
  }
}

inline std::string table_file_name(int rank) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "rank_%03d.smirt", rank);
  return buf;
}

inline void emit_tables(const RoutingTables& rt, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (int r = 0; r < rt.num_ranks(); ++r) {
    const auto bytes = encode_rank_tables(rt, r);
    std::ofstream out(dir / table_file_name(r), std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write routing table for rank " + std::to_string(r));
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
}

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline RoutingTables load_tables(const std::filesystem::path& dir) {
  const auto first = read_bytes(dir / table_file_name(0));
  const auto h = decode_rank_header(first);
  RoutingTables rt(h.num_ranks, h.ifaces);
  decode_rank_tables(first, rt);
  for (int r = 1; r < h.num_ranks; ++r) {
    const auto bytes = read_bytes(dir / table_file_name(r));
    if (decode_rank_header(bytes).rank != r) throw ParseError("routing table: rank mismatch in " + table_file_name(r));
    decode_rank_tables(bytes, rt);
  }
  return rt;
}

}  // namespace smi
