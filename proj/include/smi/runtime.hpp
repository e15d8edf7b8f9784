#pragma once

// Executes one rank procedure per rank on top of a Fabric, in one of two modes:
//
// Cycle mode: deterministic and single-stepped. Each cycle, blocked procedures
// whose wait condition holds are resumed in rank order (one at a time, on
// their own threads, handing a baton back and forth), then every CK unit is
// stepped once in (rank, CK_R before CK_S, iface) order. An application
// endpoint moves at most one packet per direction per cycle.
//
// Concurrent mode: procedures and forwarding workers run freely; all
// interaction goes through the bounded queues. A watchdog reports a deadlock
// with a dump of every non-empty queue and blocked procedure.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <exception>
#include <functional>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "smi/comm.hpp"
#include "smi/config.hpp"
#include "smi/errors.hpp"
#include "smi/packet.hpp"
#include "smi/ports.hpp"
#include "smi/routing.hpp"
#include "smi/topology.hpp"
#include "smi/trace.hpp"
#include "smi/transport.hpp"

namespace smi {

class RankContext;
class Runtime;
struct Slot;

using Program = std::function<void(RankContext&)>;

struct RankCounters {
  std::uint64_t elements_pushed = 0;
  std::uint64_t elements_popped = 0;
  std::uint64_t packets_sent = 0;
  std::uint64_t packets_received = 0;
};

struct RunReport {
  std::uint64_t cycles = 0;               // cycle mode only
  std::size_t residual_packets = 0;       // packets left anywhere after all procedures returned
  std::vector<RankCounters> counters;     // by rank
  std::vector<UnitStats> unit_stats;      // in Fabric::units() order
  std::vector<std::string> unit_names;
  std::vector<TraceEvent> trace;          // when tracing is enabled
};

namespace detail {
struct Aborted {};
}  // namespace detail

/// Per-rank view of the runtime handed to a rank procedure. Channels and
/// collectives are built on the packet-level calls below.
class RankContext {
 public:
  struct PortEndpoint {
    const PortDecl* decl = nullptr;
    PacketQueue* tx = nullptr;
    PacketQueue* rx = nullptr;
    std::deque<NetworkPacket> stash;  // received but not yet claimed
    bool send_open = false;
    bool recv_open = false;
    bool collective_open = false;
    std::uint64_t last_tx = std::numeric_limits<std::uint64_t>::max();
    std::uint64_t last_rx = std::numeric_limits<std::uint64_t>::max();
  };

  RankContext(Runtime& rt, int rank);

  int rank() const { return rank_; }
  int world_size() const;
  Communicator world() const { return Communicator::world(world_size()); }

  /// Rank of the caller inside `comm`.
  int comm_rank(const Communicator& comm) const {
    auto r = comm.rank_of(rank_);
    if (!r) throw ContractViolation("rank " + std::to_string(rank_) + " is not a member of the communicator");
    return *r;
  }
  int comm_size(const Communicator& comm) const { return comm.size(); }

  /// Current cycle (always 0 in concurrent mode).
  std::uint64_t now() const;
  bool cycle_mode() const;

  /// Idles for `cycles` cycles (microseconds in concurrent mode).
  void delay(std::uint64_t cycles);

  const PortDecl& port_decl(int port) const { return *endpoint(port).decl; }
  /// Asynchronicity degree k of `port`, in elements.
  std::size_t async_degree(int port) const;
  /// Reduce tile size C, in elements.
  std::size_t reduce_tile() const;
  const RankCounters& counters() const { return counters_; }
  RankCounters& counters() { return counters_; }

  // --- packet-level interface used by channels and collectives ---

  PortEndpoint& endpoint(int port) {
    if (port < 0 || port >= kMaxPorts || !endpoints_[port].decl) {
      throw ConfigError("port " + std::to_string(port) + " is not declared");
    }
    return endpoints_[port];
  }
  const PortEndpoint& endpoint(int port) const { return const_cast<RankContext*>(this)->endpoint(port); }

  /// Blocks until the port's queue towards CK_S has room, then enqueues.
  void send_packet(int port, const NetworkPacket& p);

  /// Returns the first packet on `port` matching `pred`, looking at stashed
  /// packets first and stashing non-matching arrivals.
  template <class Pred>
  NetworkPacket take_packet(int port, Pred&& pred) {
    auto& ep = endpoint(port);
    for (auto it = ep.stash.begin(); it != ep.stash.end(); ++it) {
      if (pred(*it)) {
        NetworkPacket p = *it;
        ep.stash.erase(it);
        return p;
      }
    }
    for (;;) {
      NetworkPacket p = recv_packet(port);
      if (pred(p)) return p;
      ep.stash.push_back(p);
    }
  }

  /// Like take_packet but only looks at packets that already arrived; never blocks.
  std::optional<NetworkPacket> take_stashed(int port, OpType op, int src_world) {
    auto& ep = endpoint(port);
    for (auto it = ep.stash.begin(); it != ep.stash.end(); ++it) {
      if (it->header.op == op && it->header.src_rank == src_world) {
        NetworkPacket p = *it;
        ep.stash.erase(it);
        return p;
      }
    }
    return std::nullopt;
  }

  NetworkPacket take_packet(int port, OpType op, int src_world) {
    return take_packet(port, [&](const NetworkPacket& p) {
      return p.header.op == op && p.header.src_rank == src_world;
    });
  }

 private:
  friend class Runtime;

  NetworkPacket recv_packet(int port);

  template <class Pred>
  void block_until(Pred&& pred, const char* what, int port);

  Runtime& rt_;
  int rank_;
  std::vector<PortEndpoint> endpoints_;
  RankCounters counters_;
  Slot* slot_ = nullptr;
};

struct Slot {
  int rank = 0;
  Program program;
  std::thread thread;
  std::condition_variable cv;
  bool turn = false;
  bool done = false;
  bool delaying = false;
  std::function<bool()> ready;
  const char* waiting_on = "start";
  int waiting_port = -1;
  std::exception_ptr error;
};

class Runtime {
 public:
  Runtime(TopologySpec topo, RoutingTables tables, PortSet ports, RunConfig cfg = {})
      : topo_(std::move(topo)), tables_(std::move(tables)), ports_(std::move(ports)), cfg_(std::move(cfg)) {
    for (const auto& [p, k] : cfg_.async_degree) {
      if (!ports_.contains(p)) throw ConfigError("k configured for undeclared port " + std::to_string(p));
      if (k < 1) throw ConfigError("k must be positive");
    }
  }

  /// Loads topology, tables and ports from the paths in `cfg`.
  static Runtime from_config(const RunConfig& cfg) {
    if (cfg.topology_path.empty() || cfg.tables_path.empty() || cfg.ports_path.empty()) {
      throw ConfigError("run configuration needs topology, tables and ports paths");
    }
    return Runtime(load_topology(cfg.topology_path), load_tables(cfg.tables_path), load_ports(cfg.ports_path), cfg);
  }

  const TopologySpec& topology() const { return topo_; }
  const RoutingTables& tables() const { return tables_; }
  const PortSet& ports() const { return ports_; }
  const RunConfig& config() const { return cfg_; }
  RunConfig& config() { return cfg_; }
  int num_ranks() const { return topo_.num_ranks(); }

  std::size_t async_degree(int port) const {
    auto it = cfg_.async_degree.find(port);
    if (it != cfg_.async_degree.end()) return it->second;
    return 2 * max_elems_per_packet(ports_.at(port).dtype);
  }

  /// Runs programs[r] on rank r (ranks beyond the vector, or with an empty
  /// function, stay idle). Throws the first error raised by any procedure or
  /// forwarding unit, or DeadlockError.
  RunReport run(const std::vector<Program>& programs) {
    if (programs.size() > static_cast<std::size_t>(num_ranks())) {
      throw ConfigError("more programs than ranks");
    }
    fabric_ = std::make_unique<Fabric>(topo_, tables_, ports_, fabric_options());
    tracer_ = std::make_unique<Tracer>(cfg_.trace);
    now_ = 0;
    abort_ = false;
    stop_ = false;
    progress_ = 0;
    failure_ = nullptr;
    contexts_.clear();
    slots_.clear();
    for (int r = 0; r < num_ranks(); ++r) contexts_.push_back(std::make_unique<RankContext>(*this, r));
    for (std::size_t r = 0; r < programs.size(); ++r) {
      if (!programs[r]) continue;
      auto s = std::make_unique<Slot>();
      s->rank = static_cast<int>(r);
      s->program = programs[r];
      contexts_[r]->slot_ = s.get();
      slots_.push_back(std::move(s));
    }

    std::string deadlock;
    if (cfg_.mode == ExecMode::kCycle) {
      deadlock = run_cycle();
    } else {
      deadlock = run_concurrent();
    }

    if (failure_) std::rethrow_exception(failure_);
    for (auto& s : slots_) {
      if (s->error) std::rethrow_exception(s->error);
    }
    if (!deadlock.empty()) throw DeadlockError(deadlock);

    RunReport rep;
    rep.cycles = now_;
    rep.residual_packets = fabric_->packets_in_flight();
    for (auto& c : contexts_) {
      rep.counters.push_back(c->counters_);
      for (const auto& ep : c->endpoints_) rep.residual_packets += ep.stash.size();
    }
    for (const auto& u : fabric_->units()) {
      rep.unit_stats.push_back(u.stats());
      rep.unit_names.push_back(u.name());
    }
    rep.trace = tracer_->events();
    return rep;
  }

  /// Same procedure on every rank.
  RunReport run_spmd(const Program& program) {
    return run(std::vector<Program>(static_cast<std::size_t>(num_ranks()), program));
  }

  /// Fabric of the most recent run.
  const Fabric& fabric() const { return *fabric_; }

  FabricOptions fabric_options() const {
    FabricOptions o;
    o.polling_reads = cfg_.polling_reads;
    o.fifo_capacity = cfg_.fifo_capacity;
    o.link_capacity = cfg_.link_capacity;
    o.link_latency = cfg_.link_latency;
    o.free_running = cfg_.mode == ExecMode::kConcurrent;
    // An eager message of k elements must fit in the receiving port's queue.
    for (const auto& [p, decl] : ports_) {
      const std::size_t max = max_elems_per_packet(decl.dtype);
      const std::size_t need = (async_degree(p) + max - 1) / max;
      o.app_rx_capacity[p] = std::max(cfg_.fifo_capacity, need);
    }
    return o;
  }

 private:
  friend class RankContext;

  bool concurrent() const { return cfg_.mode == ExecMode::kConcurrent; }

  void slot_main(Slot& s) {
    if (!concurrent()) {
      std::unique_lock lk(mu_);
      s.cv.wait(lk, [&] { return s.turn; });
    }
    try {
      if (!abort_) s.program(*contexts_[s.rank]);
    } catch (const detail::Aborted&) {
    } catch (...) {
      s.error = std::current_exception();
      abort_ = true;
    }
    {
      std::lock_guard lk(mu_);
      s.done = true;
      s.turn = false;
      ++done_count_;
    }
    sched_cv_.notify_all();
    signal_.notify();
  }

  void resume(Slot& s) {
    std::unique_lock lk(mu_);
    s.turn = true;
    s.cv.notify_one();
    sched_cv_.wait(lk, [&] { return !s.turn; });
  }

  std::string describe_blocked() const {
    std::ostringstream os;
    for (const auto& s : slots_) {
      if (s->done) continue;
      os << "  rank " << s->rank << ": waiting on " << s->waiting_on;
      if (s->waiting_port >= 0) os << " port " << s->waiting_port;
      os << '\n';
    }
    return os.str();
  }

  std::string run_cycle() {
    done_count_ = 0;
    for (auto& s : slots_) s->thread = std::thread([this, p = s.get()] { slot_main(*p); });
    std::string deadlock;
    std::uint64_t idle = 0;
    for (now_ = 0;; ++now_) {
      bool activity = false;
      for (auto& s : slots_) {
        if (s->done) continue;
        if (s->ready && !s->ready()) {
          activity |= s->delaying;
          continue;
        }
        resume(*s);
        activity = true;
        if (s->error) break;
      }
      if (abort_ || done_count_ == slots_.size()) break;
      try {
        activity |= fabric_->step(now_, *tracer_);
      } catch (...) {
        failure_ = std::current_exception();
        break;
      }
      idle = activity ? 0 : idle + 1;
      if (idle > cfg_.idle_cycles) {
        deadlock = "no progress for " + std::to_string(cfg_.idle_cycles) + " cycles at cycle " +
                   std::to_string(now_) + "\nqueues:\n" + fabric_->dump() + "procedures:\n" + describe_blocked();
        break;
      }
    }
    abort_ = true;
    for (auto& s : slots_) {
      while (!s->done) resume(*s);
    }
    for (auto& s : slots_) s->thread.join();
    return deadlock;
  }

  std::string run_concurrent() {
    done_count_ = 0;
    fabric_->attach_app_signal(&signal_);
    for (auto& s : slots_) s->thread = std::thread([this, p = s.get()] { slot_main(*p); });

    auto& units = fabric_->units();
    const std::size_t n_workers = std::min<std::size_t>(static_cast<std::size_t>(cfg_.workers), units.size());
    std::vector<std::thread> workers;
    std::mutex fail_mu;
    for (std::size_t w = 0; w < n_workers; ++w) {
      workers.emplace_back([&, w] {
        int idle_sweeps = 0;
        while (!stop_) {
          bool moved = false;
          try {
            for (std::size_t i = w; i < units.size(); i += n_workers) moved |= units[i].step(0, *tracer_);
          } catch (...) {
            std::lock_guard lk(fail_mu);
            if (!failure_) failure_ = std::current_exception();
            abort_ = true;
            signal_.notify();
            return;
          }
          if (moved) {
            progress_.fetch_add(1, std::memory_order_relaxed);
            idle_sweeps = 0;
          } else if (++idle_sweeps > 32) {
            std::this_thread::sleep_for(std::chrono::microseconds(20));
          } else {
            std::this_thread::yield();
          }
        }
      });
    }

    std::string deadlock;
    auto last_progress = progress_.load();
    auto last_change = std::chrono::steady_clock::now();
    for (;;) {
      {
        std::unique_lock lk(mu_);
        sched_cv_.wait_for(lk, std::chrono::milliseconds(2), [&] { return done_count_ == slots_.size(); });
        if (done_count_ == slots_.size()) break;
      }
      if (abort_) break;
      const auto p = progress_.load();
      const auto t = std::chrono::steady_clock::now();
      if (p != last_progress || delaying_ > 0) {
        last_progress = p;
        last_change = t;
      } else if (t - last_change > std::chrono::milliseconds(cfg_.idle_ms)) {
        std::lock_guard lk(mu_);
        deadlock = "no progress for " + std::to_string(cfg_.idle_ms) + " ms\nqueues:\n" + fabric_->dump() +
                   "procedures:\n" + describe_blocked();
        break;
      }
    }
    if (!deadlock.empty() || failure_) abort_ = true;
    signal_.notify();
    for (auto& s : slots_) s->thread.join();
    stop_ = true;
    for (auto& w : workers) w.join();
    return deadlock;
  }

  TopologySpec topo_;
  RoutingTables tables_;
  PortSet ports_;
  RunConfig cfg_;

  std::unique_ptr<Fabric> fabric_;
  std::unique_ptr<Tracer> tracer_;
  std::vector<std::unique_ptr<RankContext>> contexts_;
  std::vector<std::unique_ptr<Slot>> slots_;

  std::mutex mu_;
  std::condition_variable sched_cv_;
  std::size_t done_count_ = 0;
  Signal signal_;
  std::uint64_t now_ = 0;
  std::atomic<bool> abort_{false};
  std::atomic<bool> stop_{false};
  std::atomic<std::uint64_t> progress_{0};
  std::atomic<int> delaying_{0};
  std::exception_ptr failure_;
};

inline RankContext::RankContext(Runtime& rt, int rank)
    : rt_(rt), rank_(rank), endpoints_(static_cast<std::size_t>(kMaxPorts)) {
  for (const auto& [p, decl] : rt.ports_) {
    auto& ep = endpoints_[p];
    ep.decl = &decl;
    ep.tx = &rt.fabric_->app_tx(rank, p);
    ep.rx = &rt.fabric_->app_rx(rank, p);
  }
}

inline int RankContext::world_size() const { return rt_.num_ranks(); }
inline std::uint64_t RankContext::now() const { return rt_.concurrent() ? 0 : rt_.now_; }
inline bool RankContext::cycle_mode() const { return !rt_.concurrent(); }
inline std::size_t RankContext::async_degree(int port) const { return rt_.async_degree(port); }
inline std::size_t RankContext::reduce_tile() const { return rt_.cfg_.reduce_tile; }

template <class Pred>
void RankContext::block_until(Pred&& pred, const char* what, int port) {
  if (rt_.concurrent()) {
    while (!pred()) {
      if (rt_.abort_) throw detail::Aborted{};
      if (slot_) {
        slot_->waiting_on = what;
        slot_->waiting_port = port;
      }
      rt_.signal_.wait(pred, [&] { return rt_.abort_.load(); }, std::chrono::microseconds(500));
    }
    return;
  }
  Slot& s = *slot_;
  const bool delaying = std::string_view(what) == "delay";
  while (!pred()) {
    std::unique_lock lk(rt_.mu_);
    s.ready = [&pred] { return pred(); };
    s.delaying = delaying;
    s.waiting_on = what;
    s.waiting_port = port;
    s.turn = false;
    rt_.sched_cv_.notify_all();
    s.cv.wait(lk, [&] { return s.turn; });
    s.ready = nullptr;
    s.delaying = false;
    if (rt_.abort_) throw detail::Aborted{};
  }
}

inline void RankContext::delay(std::uint64_t cycles) {
  if (rt_.concurrent()) {
    ++rt_.delaying_;
    std::this_thread::sleep_for(std::chrono::microseconds(cycles));
    --rt_.delaying_;
    return;
  }
  const std::uint64_t until = rt_.now_ + cycles;
  block_until([&] { return rt_.now_ >= until; }, "delay", -1);
}

inline void RankContext::send_packet(int port, const NetworkPacket& p) {
  auto& ep = endpoint(port);
  block_until([&] { return (rt_.concurrent() || ep.last_tx != rt_.now_) && !ep.tx->full(); }, "send", port);
  const auto t = now();
  if (!ep.tx->try_push(p, t)) throw Error("internal: application queue refused a packet");
  ep.last_tx = t;
  ++counters_.packets_sent;
  rt_.progress_.fetch_add(1, std::memory_order_relaxed);
  rt_.tracer_->record({0, t, rank_, UnitKind::kApp, port, -1, TraceKind::kInject, p.header});
}

inline NetworkPacket RankContext::recv_packet(int port) {
  auto& ep = endpoint(port);
  block_until([&] { return (rt_.concurrent() || ep.last_rx != rt_.now_) && ep.rx->visible(now()); }, "receive",
              port);
  const auto t = now();
  auto p = ep.rx->try_pop(t);
  if (!p) throw Error("internal: application queue lost a packet");
  ep.last_rx = t;
  ++counters_.packets_received;
  rt_.progress_.fetch_add(1, std::memory_order_relaxed);
  rt_.tracer_->record({0, t, rank_, UnitKind::kApp, port, -1, TraceKind::kDeliver, p->header});
  return *p;
}

}  // namespace smi
