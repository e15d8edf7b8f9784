#pragma once

// Transient point-to-point channels.
//
// A channel is opened for a fixed element count and closes implicitly once
// that many elements have been pushed (or popped). Opening emits nothing.
// Push packs elements and emits a DATA packet whenever a packet is full or the
// message ends; Pop unpacks in the same order.
//
// If the port's asynchronicity degree k covers the whole message the sender
// is eager. Otherwise it holds ceil(k / elems-per-packet) packet credits, each
// DATA packet spends one, and the receiver returns one CREDIT per packet it
// has fully consumed (only while the sender still needs it, so no credit
// outlives the channel).

#include <array>
#include <cstddef>
#include <string>
#include <utility>

#include "smi/comm.hpp"
#include "smi/errors.hpp"
#include "smi/packet.hpp"
#include "smi/runtime.hpp"

namespace smi {

enum class Protocol { kEager, kCredit };

namespace detail {

/// Clears a port-registry flag when the channel closes or is destroyed.
class PortLease {
 public:
  PortLease() = default;
  explicit PortLease(bool* flag) : flag_(flag) { *flag_ = true; }
  PortLease(PortLease&& o) noexcept : flag_(std::exchange(o.flag_, nullptr)) {}
  PortLease& operator=(PortLease&& o) noexcept {
    if (this != &o) {
      release();
      flag_ = std::exchange(o.flag_, nullptr);
    }
    return *this;
  }
  ~PortLease() { release(); }
  void release() {
    if (flag_) *std::exchange(flag_, nullptr) = false;
  }

 private:
  bool* flag_ = nullptr;
};

inline std::size_t packets_for(std::size_t count, std::size_t per_packet) {
  return (count + per_packet - 1) / per_packet;
}

template <Element T>
void check_port(const RankContext& ctx, int port, PortKind kind) {
  const PortDecl& d = ctx.port_decl(port);
  if (d.kind != kind) {
    throw ContractViolation("port " + std::to_string(port) + " is declared " + std::string(to_string(d.kind)) +
                            ", not " + std::string(to_string(kind)));
  }
  if (d.dtype != dtype_v<T>) {
    throw ContractViolation("port " + std::to_string(port) + " carries " + std::string(to_string(d.dtype)) +
                            ", not " + std::string(to_string(dtype_v<T>)));
  }
}

}  // namespace detail

template <Element T>
class SendChannel {
 public:
  SendChannel() = default;
  SendChannel(SendChannel&&) noexcept = default;
  SendChannel& operator=(SendChannel&&) noexcept = default;

  /// Appends one element; blocks while the transport (or, under credit flow
  /// control, the receiver) cannot take the packet it completes.
  void push(const T& v) {
    if (progress_ >= count_) throw ContractViolation("push on a closed send channel");
    buf_[fill_++] = v;
    ++progress_;
    ++ctx_->counters().elements_pushed;
    if (fill_ == buf_.size() || progress_ == count_) flush();
    if (progress_ == count_) lease_.release();
  }

  bool closed() const { return progress_ == count_; }
  std::size_t count() const { return count_; }
  std::size_t progress() const { return progress_; }
  Protocol protocol() const { return protocol_; }
  int port() const { return port_; }
  /// Packet credits currently held (credit protocol).
  std::size_t credits() const { return credits_; }
  std::size_t credit_budget() const { return budget_; }

 private:
  template <Element U>
  friend SendChannel<U> open_send_channel(RankContext&, std::size_t, int, int, const Communicator&);

  void flush() {
    if (protocol_ == Protocol::kCredit) {
      while (ctx_->take_stashed(port_, OpType::kCredit, dst_world_)) {
        if (++credits_ > budget_) {
          throw ProtocolError("rank " + std::to_string(ctx_->rank()) + " port " + std::to_string(port_) +
                              ": more credits returned than packets sent");
        }
      }
      if (credits_ == 0) {
        ctx_->take_packet(port_, OpType::kCredit, dst_world_);
        ++credits_;
      }
      --credits_;
    }
    PacketHeader proto{static_cast<std::uint8_t>(ctx_->rank()), static_cast<std::uint8_t>(dst_world_),
                       static_cast<std::uint8_t>(port_), OpType::kData, 0};
    ctx_->send_packet(port_, pack_elements<T>(std::span<const T>(buf_.data(), fill_), proto));
    fill_ = 0;
  }

  RankContext* ctx_ = nullptr;
  int port_ = 0;
  int dst_world_ = 0;
  std::size_t count_ = 0;
  std::size_t progress_ = 0;
  std::array<T, max_elems_v<T>> buf_{};
  std::size_t fill_ = 0;
  Protocol protocol_ = Protocol::kEager;
  std::size_t budget_ = 0;
  std::size_t credits_ = 0;
  detail::PortLease lease_;
};

template <Element T>
class RecvChannel {
 public:
  RecvChannel() = default;
  RecvChannel(RecvChannel&&) noexcept = default;
  RecvChannel& operator=(RecvChannel&&) noexcept = default;

  /// Next element in send order; blocks until it has arrived.
  T pop() {
    if (progress_ >= count_) throw ContractViolation("pop on a closed receive channel");
    if (next_ == fill_) refill();
    T v = buf_[next_++];
    ++progress_;
    ++ctx_->counters().elements_popped;
    if (next_ == fill_) {
      // Packet fully consumed.
      if (protocol_ == Protocol::kCredit && consumed_packets_ + budget_ < total_packets_) {
        ctx_->send_packet(port_, make_control(OpType::kCredit, ctx_->rank(), src_world_, port_));
      }
      ++consumed_packets_;
    }
    if (progress_ == count_) lease_.release();
    return v;
  }

  void pop(T& out) { out = pop(); }

  bool closed() const { return progress_ == count_; }
  std::size_t count() const { return count_; }
  std::size_t progress() const { return progress_; }
  Protocol protocol() const { return protocol_; }
  int port() const { return port_; }

 private:
  template <Element U>
  friend RecvChannel<U> open_recv_channel(RankContext&, std::size_t, int, int, const Communicator&);

  void refill() {
    const auto p = ctx_->take_packet(port_, OpType::kData, src_world_);
    const std::size_t expected = std::min(buf_.size(), count_ - progress_);
    if (p.header.valid_count != expected) {
      throw ProtocolError("rank " + std::to_string(ctx_->rank()) + " port " + std::to_string(port_) +
                          ": packet carries " + std::to_string(p.header.valid_count) + " elements, expected " +
                          std::to_string(expected) + " (sender and receiver disagree on count or type)");
    }
    fill_ = unpack_elements<T>(p, std::span<T>(buf_));
    next_ = 0;
  }

  RankContext* ctx_ = nullptr;
  int port_ = 0;
  int src_world_ = 0;
  std::size_t count_ = 0;
  std::size_t progress_ = 0;
  std::array<T, max_elems_v<T>> buf_{};
  std::size_t fill_ = 0;
  std::size_t next_ = 0;
  Protocol protocol_ = Protocol::kEager;
  std::size_t budget_ = 0;
  std::size_t total_packets_ = 0;
  std::size_t consumed_packets_ = 0;
  detail::PortLease lease_;
};

inline Protocol protocol_for(std::size_t count, std::size_t k) {
  return k >= count ? Protocol::kEager : Protocol::kCredit;
}

/// Opens a send channel of `count` elements to communicator rank `destination`.
template <Element T>
SendChannel<T> open_send_channel(RankContext& ctx, std::size_t count, int destination, int port,
                                 const Communicator& comm) {
  detail::check_port<T>(ctx, port, PortKind::kP2P);
  const int dst = comm.world_rank(destination);
  auto& ep = ctx.endpoint(port);
  if (ep.send_open) throw ContractViolation("port " + std::to_string(port) + " already has an open send channel");
  SendChannel<T> ch;
  ch.ctx_ = &ctx;
  ch.port_ = port;
  ch.dst_world_ = dst;
  ch.count_ = count;
  const std::size_t k = ctx.async_degree(port);
  ch.protocol_ = protocol_for(count, k);
  ch.budget_ = detail::packets_for(k, max_elems_v<T>);
  ch.credits_ = ch.protocol_ == Protocol::kCredit ? ch.budget_ : 0;
  if (count > 0) ch.lease_ = detail::PortLease(&ep.send_open);
  return ch;
}

template <Element T>
SendChannel<T> open_send_channel(RankContext& ctx, std::size_t count, int destination, int port) {
  return open_send_channel<T>(ctx, count, destination, port, ctx.world());
}

/// Opens a receive channel of `count` elements from communicator rank `source`.
template <Element T>
RecvChannel<T> open_recv_channel(RankContext& ctx, std::size_t count, int source, int port,
                                 const Communicator& comm) {
  detail::check_port<T>(ctx, port, PortKind::kP2P);
  const int src = comm.world_rank(source);
  auto& ep = ctx.endpoint(port);
  if (ep.recv_open) throw ContractViolation("port " + std::to_string(port) + " already has an open receive channel");
  RecvChannel<T> ch;
  ch.ctx_ = &ctx;
  ch.port_ = port;
  ch.src_world_ = src;
  ch.count_ = count;
  const std::size_t k = ctx.async_degree(port);
  ch.protocol_ = protocol_for(count, k);
  ch.budget_ = detail::packets_for(k, max_elems_v<T>);
  ch.total_packets_ = detail::packets_for(count, max_elems_v<T>);
  if (count > 0) ch.lease_ = detail::PortLease(&ep.recv_open);
  return ch;
}

template <Element T>
RecvChannel<T> open_recv_channel(RankContext& ctx, std::size_t count, int source, int port) {
  return open_recv_channel<T>(ctx, count, source, port, ctx.world());
}

}  // namespace smi
