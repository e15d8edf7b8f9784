#pragma once

#include <atomic>
#include <cstdint>
#include <mutex>
#include <ostream>
#include <string>
#include <vector>

#include "smi/packet.hpp"

namespace smi {

enum class UnitKind : std::uint8_t { kApp, kCkS, kCkR };

enum class TraceKind : std::uint8_t {
  kInject,   // application wrote a packet into its port queue
  kDeliver,  // application took a packet from its port queue
  kAccept,   // CK unit moved a packet from one of its inputs
  kStall,    // CK unit found a packet whose target queue was full
};

struct TraceEvent {
  std::uint64_t seq = 0;
  std::uint64_t cycle = 0;
  int rank = 0;
  UnitKind unit = UnitKind::kApp;
  int index = 0;  // iface for CK units, port for applications
  int input = -1;  // polled input index (CK units)
  TraceKind kind = TraceKind::kInject;
  PacketHeader header;
};

inline std::string unit_name(int rank, UnitKind unit, int index) {
  const char* k = unit == UnitKind::kApp ? ".app" : unit == UnitKind::kCkS ? ".cks" : ".ckr";
  return "r" + std::to_string(rank) + k + std::to_string(index);
}

/// Append-only event log; thread-safe. Disabled tracers record nothing.
class Tracer {
 public:
  explicit Tracer(bool enabled = false) : enabled_(enabled) {}

  bool enabled() const { return enabled_; }

  void record(TraceEvent e) {
    if (!enabled_) return;
    std::lock_guard lk(mu_);
    e.seq = events_.size();
    events_.push_back(e);
  }

  /// Only safe once the run has finished.
  const std::vector<TraceEvent>& events() const { return events_; }

  void write_csv(std::ostream& os) const;

 private:
  bool enabled_;
  std::mutex mu_;
  std::vector<TraceEvent> events_;
};

/// Trace CSV: cycle,unit,event. The event column holds the event kind, the
/// polled input for CK units and the packet header.
inline void write_trace_csv(std::ostream& os, const std::vector<TraceEvent>& events) {
  os << "cycle,unit,event\n";
  for (const auto& e : events) {
    os << e.cycle << ',' << unit_name(e.rank, e.unit, e.index) << ',';
    switch (e.kind) {
      case TraceKind::kInject: os << "inject"; break;
      case TraceKind::kDeliver: os << "deliver"; break;
      case TraceKind::kAccept: os << "accept in=" << e.input; break;
      case TraceKind::kStall: os << "stall in=" << e.input; break;
    }
    os << ' ' << describe(e.header) << '\n';
  }
}

inline void Tracer::write_csv(std::ostream& os) const { write_trace_csv(os, events_); }

}  // namespace smi
