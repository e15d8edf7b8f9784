#pragma once

// Forwarding engine. Every rank has one CK_S / CK_R pair per network
// interface. Units are connected by bounded FIFOs:
//
//   app ports  -> CK_S(pair of port)        CK_R -> app ports (by CK_R table)
//   CK_S(j) -> CK_R(j)   (local delivery)   CK_R(j) -> CK_S(j) (transit)
//   CK_S(j) -> CK_S(o)   all-to-all         CK_R(j) -> CK_R(o) all-to-all
//   CK_S(j) -> network link j               network link j -> CK_R(j)
//
// Each unit polls its inputs round robin, one poll per step. After accepting
// a packet it keeps reading the same input, up to R packets in a row, while
// more data is ready there. A packet whose target queue is full is left in
// place (the unit stalls on that input and moves on); nothing is dropped.

#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "smi/errors.hpp"
#include "smi/packet.hpp"
#include "smi/ports.hpp"
#include "smi/queue.hpp"
#include "smi/routing.hpp"
#include "smi/topology.hpp"
#include "smi/trace.hpp"

namespace smi {

struct FabricOptions {
  int polling_reads = 1;  // R
  std::size_t fifo_capacity = 16;
  std::size_t link_capacity = 16;
  std::uint64_t link_latency = 1;
  bool free_running = false;                   // zero latencies, cycle counter unused
  std::map<int, std::size_t> app_rx_capacity;  // per-port override of fifo_capacity
};

enum class ForwardKind {
  kToPairedCkr,   // CK_S: destination is this rank
  kEmit,          // CK_S: out through this unit's network interface
  kToSiblingCks,  // CK_S: to the CK_S owning the chosen interface
  kToPairedCks,   // CK_R: transit traffic
  kToApp,         // CK_R: port is served by this pair
  kToSiblingCkr,  // CK_R: port is served by another pair
};

struct ForwardAction {
  ForwardKind kind;
  int arg = -1;
  friend bool operator==(const ForwardAction&, const ForwardAction&) = default;
};

struct UnitStats {
  std::uint64_t polls = 0;
  std::uint64_t accepted = 0;
  std::uint64_t stalls = 0;
};

class CkUnit {
 public:
  CkUnit(UnitKind kind, int rank, int iface, int polling_reads, const PairTables* tables, int num_ranks)
      : kind_(kind), rank_(rank), iface_(iface), reads_limit_(polling_reads), tables_(tables), num_ranks_(num_ranks) {}

  UnitKind kind() const { return kind_; }
  int rank() const { return rank_; }
  int iface() const { return iface_; }
  std::string name() const { return unit_name(rank_, kind_, iface_); }
  const std::vector<PacketQueue*>& inputs() const { return inputs_; }
  const UnitStats& stats() const { return stats_; }

  /// Forwarding decision for `pkt` arriving at this unit. Throws RoutingError
  /// when the loaded tables cannot route it.
  ForwardAction route(const NetworkPacket& pkt) const {
    const auto& h = pkt.header;
    if (kind_ == UnitKind::kCkS) {
      if (h.dst_rank == rank_) return {ForwardKind::kToPairedCkr};
      if (h.dst_rank >= num_ranks_) fail(pkt, "unknown destination rank");
      const CksEntry e = tables_->cks[h.dst_rank];
      switch (e.action) {
        case CksAction::kEmitIface: return {ForwardKind::kEmit};
        case CksAction::kForwardLocalCks: return {ForwardKind::kToSiblingCks, e.arg};
        case CksAction::kDeliverLocal: break;
      }
      fail(pkt, "table delivers locally a packet for another rank");
    }
    if (h.dst_rank != rank_) return {ForwardKind::kToPairedCks};
    const CkrEntry e = tables_->ckr[h.port];
    switch (e.action) {
      case CkrAction::kToApp: return {ForwardKind::kToApp, h.port};
      case CkrAction::kForwardLocalCkr: return {ForwardKind::kToSiblingCkr, e.arg};
      case CkrAction::kNone: break;
    }
    fail(pkt, "port is not routed on this rank");
  }

  /// One poll. Returns true when a packet moved.
  bool step(std::uint64_t now, Tracer& tracer) {
    if (inputs_.empty()) return false;
    ++stats_.polls;
    PacketQueue* in = inputs_[cur_];
    const auto head = in->peek(now);
    if (!head) {
      advance();
      return false;
    }
    PacketQueue* out = target(route(*head), *head);
    if (!out->try_push(*head, now)) {
      ++stats_.stalls;
      tracer.record({0, now, rank_, kind_, iface_, static_cast<int>(cur_), TraceKind::kStall, head->header});
      advance();
      return false;
    }
    in->try_pop(now);
    ++stats_.accepted;
    tracer.record({0, now, rank_, kind_, iface_, static_cast<int>(cur_), TraceKind::kAccept, head->header});
    if (++reads_ >= reads_limit_ || !in->visible(now + 1)) advance();
    return true;
  }

 private:
  friend class Fabric;

  [[noreturn]] void fail(const NetworkPacket& pkt, const std::string& why) const {
    throw RoutingError(name() + ": " + why + " (" + describe(pkt.header) + ")");
  }

  PacketQueue* target(const ForwardAction& a, const NetworkPacket& pkt) const {
    PacketQueue* q = nullptr;
    switch (a.kind) {
      case ForwardKind::kToPairedCkr:
      case ForwardKind::kToPairedCks: q = paired_; break;
      case ForwardKind::kEmit: q = net_out_; break;
      case ForwardKind::kToSiblingCks:
      case ForwardKind::kToSiblingCkr:
        if (a.arg >= 0 && a.arg < static_cast<int>(siblings_.size())) q = siblings_[a.arg];
        break;
      case ForwardKind::kToApp: q = (*app_rx_)[a.arg]; break;
    }
    if (!q) fail(pkt, "routing action has no attached queue");
    return q;
  }

  void advance() {
    cur_ = (cur_ + 1) % inputs_.size();
    reads_ = 0;
  }

  UnitKind kind_;
  int rank_;
  int iface_;
  int reads_limit_;
  const PairTables* tables_;
  int num_ranks_;

  std::vector<PacketQueue*> inputs_;
  PacketQueue* paired_ = nullptr;
  PacketQueue* net_out_ = nullptr;
  std::vector<PacketQueue*> siblings_;  // by iface; null for self
  const std::vector<PacketQueue*>* app_rx_ = nullptr;

  std::size_t cur_ = 0;
  int reads_ = 0;
  UnitStats stats_;
};

/// All ranks' units and queues for one run.
class Fabric {
 public:
  Fabric(const TopologySpec& topo, const RoutingTables& tables, const PortSet& ports, FabricOptions opt)
      : topo_(topo), tables_(tables), ports_(ports), opt_(std::move(opt)) {
    if (tables_.num_ranks() != topo_.num_ranks() || tables_.ifaces_per_rank() != topo_.ifaces_per_rank()) {
      throw ConfigError("routing tables do not match the topology shape");
    }
    if (opt_.polling_reads < 1) throw ConfigError("R must be positive");
    const int n = topo_.num_ranks(), nif = topo_.ifaces_per_rank();
    const std::uint64_t lat = opt_.free_running ? 0 : 1;
    const std::uint64_t link_lat = opt_.free_running ? 0 : opt_.link_latency;
    auto make = [&](std::string name, std::size_t cap, std::uint64_t l) {
      queues_.push_back(std::make_unique<PacketQueue>(std::move(name), cap, l));
      return queues_.back().get();
    };

    app_tx_.assign(n, std::vector<PacketQueue*>(kMaxPorts, nullptr));
    app_rx_.assign(n, std::vector<PacketQueue*>(kMaxPorts, nullptr));
    std::vector<std::vector<PacketQueue*>> s2r(n), r2s(n), net_out(n, std::vector<PacketQueue*>(nif, nullptr)),
        net_in(n, std::vector<PacketQueue*>(nif, nullptr));
    std::vector<std::vector<std::vector<PacketQueue*>>> ss(n), rr(n);

    for (int r = 0; r < n; ++r) {
      const std::string pre = "r" + std::to_string(r);
      for (const auto& [p, decl] : ports_) {
        auto it = opt_.app_rx_capacity.find(p);
        const std::size_t rx_cap = it == opt_.app_rx_capacity.end() ? opt_.fifo_capacity : it->second;
        app_tx_[r][p] = make(pre + ".app" + std::to_string(p) + "->cks", opt_.fifo_capacity, lat);
        app_rx_[r][p] = make(pre + ".ckr->app" + std::to_string(p), rx_cap, lat);
      }
      ss[r].assign(nif, std::vector<PacketQueue*>(nif, nullptr));
      rr[r].assign(nif, std::vector<PacketQueue*>(nif, nullptr));
      for (int j = 0; j < nif; ++j) {
        const std::string js = std::to_string(j);
        s2r[r].push_back(make(pre + ".cks" + js + "->ckr" + js, opt_.fifo_capacity, lat));
        r2s[r].push_back(make(pre + ".ckr" + js + "->cks" + js, opt_.fifo_capacity, lat));
        for (int o = 0; o < nif; ++o) {
          if (o == j) continue;
          const std::string os = std::to_string(o);
          ss[r][j][o] = make(pre + ".cks" + js + "->cks" + os, opt_.fifo_capacity, lat);
          rr[r][j][o] = make(pre + ".ckr" + js + "->ckr" + os, opt_.fifo_capacity, lat);
        }
      }
    }
    for (const auto& [a, b] : topo_.connections()) {
      auto* ab = make("link" + to_string(a) + "->" + to_string(b), opt_.link_capacity, link_lat);
      auto* ba = make("link" + to_string(b) + "->" + to_string(a), opt_.link_capacity, link_lat);
      net_out[a.rank][a.iface] = ab;
      net_in[b.rank][b.iface] = ab;
      net_out[b.rank][b.iface] = ba;
      net_in[a.rank][a.iface] = ba;
    }

    // Deterministic stepping order: rank, then CK_R before CK_S, then iface.
    for (int r = 0; r < n; ++r) {
      for (int j = 0; j < nif; ++j) {
        CkUnit u(UnitKind::kCkR, r, j, opt_.polling_reads, &tables_.at(r, j), n);
        if (net_in[r][j]) u.inputs_.push_back(net_in[r][j]);
        u.inputs_.push_back(s2r[r][j]);
        for (int o = 0; o < nif; ++o) {
          if (o != j) u.inputs_.push_back(rr[r][o][j]);
        }
        u.paired_ = r2s[r][j];
        u.siblings_ = rr[r][j];
        u.app_rx_ = &app_rx_[r];
        units_.push_back(std::move(u));
      }
      for (int j = 0; j < nif; ++j) {
        CkUnit u(UnitKind::kCkS, r, j, opt_.polling_reads, &tables_.at(r, j), n);
        for (const auto& [p, decl] : ports_) {
          if (pair_for_port(p, nif) == j) u.inputs_.push_back(app_tx_[r][p]);
        }
        u.inputs_.push_back(r2s[r][j]);
        for (int o = 0; o < nif; ++o) {
          if (o != j) u.inputs_.push_back(ss[r][o][j]);
        }
        u.paired_ = s2r[r][j];
        u.net_out_ = net_out[r][j];
        u.siblings_ = ss[r][j];
        units_.push_back(std::move(u));
      }
    }
  }

  Fabric(const Fabric&) = delete;
  Fabric& operator=(const Fabric&) = delete;

  const TopologySpec& topology() const { return topo_; }
  const RoutingTables& tables() const { return tables_; }
  const PortSet& ports() const { return ports_; }
  const FabricOptions& options() const { return opt_; }
  int num_ranks() const { return topo_.num_ranks(); }

  PacketQueue& app_tx(int rank, int port) { return *checked(app_tx_, rank, port); }
  PacketQueue& app_rx(int rank, int port) { return *checked(app_rx_, rank, port); }

  std::vector<CkUnit>& units() { return units_; }
  const std::vector<CkUnit>& units() const { return units_; }

  CkUnit& unit(int rank, UnitKind kind, int iface) {
    const int nif = topo_.ifaces_per_rank();
    return units_[static_cast<std::size_t>(rank * 2 * nif + (kind == UnitKind::kCkS ? nif : 0) + iface)];
  }

  /// Steps every unit once in the fixed order. Returns true if any packet moved.
  bool step(std::uint64_t now, Tracer& tracer) {
    bool moved = false;
    for (auto& u : units_) moved |= u.step(now, tracer);
    return moved;
  }

  void attach_app_signal(Signal* s) {
    for (auto& per_rank : {&app_tx_, &app_rx_}) {
      for (auto& qs : *per_rank) {
        for (auto* q : qs) {
          if (q) q->attach(s);
        }
      }
    }
  }

  std::size_t packets_in_flight() const {
    std::size_t n = 0;
    for (const auto& q : queues_) n += q->size();
    return n;
  }

  std::string dump() const {
    std::ostringstream os;
    for (const auto& q : queues_) {
      if (const auto s = q->size()) os << "  " << q->name() << ": " << s << "/" << q->capacity() << '\n';
    }
    return os.str();
  }

 private:
  static PacketQueue* checked(std::vector<std::vector<PacketQueue*>>& v, int rank, int port) {
    if (rank < 0 || rank >= static_cast<int>(v.size()) || port < 0 || port >= kMaxPorts || !v[rank][port]) {
      throw ConfigError("port " + std::to_string(port) + " is not declared");
    }
    return v[rank][port];
  }

  TopologySpec topo_;
  RoutingTables tables_;
  PortSet ports_;
  FabricOptions opt_;
  std::vector<std::unique_ptr<PacketQueue>> queues_;
  std::vector<std::vector<PacketQueue*>> app_tx_, app_rx_;
  std::vector<CkUnit> units_;
};

}  // namespace smi
