#pragma once

// Collective channels with a linear scheme. Root and non-root logic exist on
// every rank; the role is decided when the channel is opened.
//
// Every collective starts with a rendezvous: each non-root sends SYNC_READY to
// the root and the root waits for all of them (also when count is 0).
//
//  Bcast   root streams each packet to every other rank, ascending rank order.
//  Scatter root streams block i to rank i, one block after the other.
//  Gather  root grants rank i (SYNC_READY) only after rank i-1's block has
//          fully arrived, so contributions arrive in rank order.
//  Reduce  root hands out one CREDIT per C-element tile; a rank may send
//          tile t only after every rank's tile t-1 reached the root. The root
//          folds each element in ascending communicator-rank order.

#include <algorithm>
#include <array>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "smi/channel.hpp"
#include "smi/comm.hpp"
#include "smi/errors.hpp"
#include "smi/packet.hpp"
#include "smi/ports.hpp"
#include "smi/runtime.hpp"

namespace smi {

template <Element T>
T apply(ReduceOp op, T a, T b) {
  switch (op) {
    case ReduceOp::kAdd: return static_cast<T>(a + b);
    case ReduceOp::kMax: return std::max(a, b);
    case ReduceOp::kMin: return std::min(a, b);
  }
  return a;
}

template <Element T>
T identity(ReduceOp op) {
  switch (op) {
    case ReduceOp::kAdd: return T{};
    case ReduceOp::kMax: return std::numeric_limits<T>::lowest();
    case ReduceOp::kMin: return std::numeric_limits<T>::max();
  }
  return T{};
}

namespace detail {

/// Shared state of an open collective on one rank.
template <Element T>
class CollectiveBase {
 public:
  bool closed() const { return progress_ == calls_; }
  std::size_t count() const { return count_; }
  int root() const { return root_; }
  bool is_root() const { return my_rank_ == root_; }
  int port() const { return port_; }

 protected:
  CollectiveBase() = default;

  void open(RankContext& ctx, PortKind kind, std::size_t count, int port, int root, const Communicator& comm) {
    check_port<T>(ctx, port, kind);
    ctx_ = &ctx;
    port_ = port;
    count_ = count;
    comm_ = comm;
    root_ = root;
    root_world_ = comm.world_rank(root);
    my_rank_ = ctx.comm_rank(comm);
    auto& ep = ctx.endpoint(port);
    if (ep.collective_open) throw ContractViolation("port " + std::to_string(port) + " already has a collective open");
    lease_ = PortLease(&ep.collective_open);
    if (is_root()) {
      for (int r = 0; r < comm_.size(); ++r) {
        if (r != root_) ctx.take_packet(port_, OpType::kSyncReady, comm_.world_rank(r));
      }
    } else {
      ctx.send_packet(port_, make_control(OpType::kSyncReady, ctx.rank(), root_world_, port_));
    }
  }

  void begin_call() {
    if (progress_ >= calls_) throw ContractViolation("call on a closed collective channel");
  }
  void end_call() {
    if (++progress_ == calls_) lease_.release();
  }

  void send_data(int dst_world, std::span<const T> elems) {
    PacketHeader proto{static_cast<std::uint8_t>(ctx_->rank()), static_cast<std::uint8_t>(dst_world),
                       static_cast<std::uint8_t>(port_), OpType::kData, 0};
    ctx_->send_packet(port_, pack_elements<T>(elems, proto));
  }

  /// Receives the next DATA packet from `src_world` into buf_, checking that
  /// it carries exactly `expected` elements.
  void receive_data(int src_world, std::size_t expected) {
    const auto p = ctx_->take_packet(port_, OpType::kData, src_world);
    check_count(p, expected);
    fill_ = unpack_elements<T>(p, std::span<T>(buf_));
    next_ = 0;
  }

  void check_count(const NetworkPacket& p, std::size_t expected) const {
    if (p.header.valid_count != expected) {
      throw ProtocolError("collective on port " + std::to_string(port_) + ": rank " +
                          std::to_string(p.header.src_rank) + " sent " + std::to_string(p.header.valid_count) +
                          " elements where " + std::to_string(expected) +
                          " were expected (ranks disagree on parameters)");
    }
  }

  RankContext* ctx_ = nullptr;
  int port_ = 0;
  std::size_t count_ = 0;
  std::size_t calls_ = 0;  // calls this rank makes before the channel closes
  std::size_t progress_ = 0;
  Communicator comm_;
  int root_ = 0;
  int root_world_ = 0;
  int my_rank_ = 0;
  std::array<T, max_elems_v<T>> buf_{};
  std::size_t fill_ = 0;
  std::size_t next_ = 0;
  PortLease lease_;
};

}  // namespace detail

template <Element T>
class BcastChannel : public detail::CollectiveBase<T> {
 public:
  /// Called `count` times on every rank. The root's `data` is sent; other
  /// ranks receive into it.
  void bcast(T& data) {
    this->begin_call();
    if (this->is_root()) {
      this->buf_[this->fill_++] = data;
      const bool last = this->progress_ + 1 == this->count_;
      if (this->fill_ == this->buf_.size() || last) {
        for (int r = 0; r < this->comm_.size(); ++r) {
          if (r != this->root_) this->send_data(this->comm_.world_rank(r), {this->buf_.data(), this->fill_});
        }
        this->fill_ = 0;
      }
    } else {
      if (this->next_ == this->fill_) {
        this->receive_data(this->root_world_, std::min(this->buf_.size(), this->count_ - this->progress_));
      }
      data = this->buf_[this->next_++];
    }
    this->end_call();
  }

 private:
  template <Element U>
  friend BcastChannel<U> open_bcast_channel(RankContext&, std::size_t, int, int, const Communicator&);
};

template <Element T>
BcastChannel<T> open_bcast_channel(RankContext& ctx, std::size_t count, int port, int root, const Communicator& comm) {
  BcastChannel<T> ch;
  ch.calls_ = count;
  ch.open(ctx, PortKind::kBcast, count, port, root, comm);
  if (count == 0) ch.lease_.release();
  return ch;
}

template <Element T>
class ScatterChannel : public detail::CollectiveBase<T> {
 public:
  /// The root calls size*count times, supplying the blocks of every rank in
  /// communicator-rank order; every other rank calls `count` times and
  /// receives its block in `data_rcv`.
  void scatter(const T& data_snd, T& data_rcv) {
    this->begin_call();
    const std::size_t j = this->progress_;
    if (this->is_root()) {
      const int block = static_cast<int>(j / this->count_);
      if (block == this->root_) {
        data_rcv = data_snd;
      } else {
        this->buf_[this->fill_++] = data_snd;
        if (this->fill_ == this->buf_.size() || j % this->count_ == this->count_ - 1) {
          this->send_data(this->comm_.world_rank(block), {this->buf_.data(), this->fill_});
          this->fill_ = 0;
        }
      }
    } else {
      if (this->next_ == this->fill_) {
        this->receive_data(this->root_world_, std::min(this->buf_.size(), this->count_ - j));
      }
      data_rcv = this->buf_[this->next_++];
    }
    this->end_call();
  }

 private:
  template <Element U>
  friend ScatterChannel<U> open_scatter_channel(RankContext&, std::size_t, int, int, const Communicator&);
};

template <Element T>
ScatterChannel<T> open_scatter_channel(RankContext& ctx, std::size_t count, int port, int root,
                                       const Communicator& comm) {
  ScatterChannel<T> ch;
  ch.open(ctx, PortKind::kScatter, count, port, root, comm);
  ch.calls_ = ch.is_root() ? count * static_cast<std::size_t>(comm.size()) : count;
  if (ch.calls_ == 0) ch.lease_.release();
  return ch;
}

template <Element T>
class GatherChannel : public detail::CollectiveBase<T> {
 public:
  /// Every non-root calls `count` times with its contribution. The root calls
  /// size*count times and receives all contributions in communicator-rank
  /// order; during its own block it supplies `data_snd`.
  void gather(const T& data_snd, T& data_rcv) {
    this->begin_call();
    const std::size_t j = this->progress_;
    if (this->is_root()) {
      const int block = static_cast<int>(j / this->count_);
      const std::size_t off = j % this->count_;
      if (block == this->root_) {
        data_rcv = data_snd;
      } else {
        const int src = this->comm_.world_rank(block);
        if (off == 0) {
          this->ctx_->send_packet(this->port_, make_control(OpType::kSyncReady, this->ctx_->rank(), src, this->port_));
        }
        if (this->next_ == this->fill_) {
          this->receive_data(src, std::min(this->buf_.size(), this->count_ - off));
        }
        data_rcv = this->buf_[this->next_++];
      }
    } else {
      if (j == 0) this->ctx_->take_packet(this->port_, OpType::kSyncReady, this->root_world_);
      this->buf_[this->fill_++] = data_snd;
      if (this->fill_ == this->buf_.size() || j + 1 == this->count_) {
        this->send_data(this->root_world_, {this->buf_.data(), this->fill_});
        this->fill_ = 0;
      }
    }
    this->end_call();
  }

 private:
  template <Element U>
  friend GatherChannel<U> open_gather_channel(RankContext&, std::size_t, int, int, const Communicator&);
};

template <Element T>
GatherChannel<T> open_gather_channel(RankContext& ctx, std::size_t count, int port, int root,
                                     const Communicator& comm) {
  GatherChannel<T> ch;
  ch.open(ctx, PortKind::kGather, count, port, root, comm);
  ch.calls_ = ch.is_root() ? count * static_cast<std::size_t>(comm.size()) : count;
  if (ch.calls_ == 0) ch.lease_.release();
  return ch;
}

template <Element T>
class ReduceChannel : public detail::CollectiveBase<T> {
 public:
  ReduceOp op() const { return op_; }
  std::size_t tile() const { return tile_; }

  /// Called `count` times on every rank. At the root, `data_rcv` receives the
  /// reduction of element j over all ranks; elsewhere it is left untouched.
  void reduce(const T& data_snd, T& data_rcv) {
    this->begin_call();
    const std::size_t j = this->progress_;
    const std::size_t off = j % tile_;
    const std::size_t tile_len = std::min(tile_, this->count_ - (j - off));
    if (this->is_root()) {
      staging_[this->root_][off] = data_snd;
      have_[this->root_] = off + 1;
      while (std::any_of(have_.begin(), have_.end(), [&](std::size_t h) { return h <= off; })) {
        const auto p = this->ctx_->take_packet(this->port_, [&](const NetworkPacket& pk) {
          return pk.header.op == OpType::kData && contributor_[pk.header.src_rank];
        });
        const int r = *this->comm_.rank_of(p.header.src_rank);
        this->check_count(p, std::min(this->buf_.size(), tile_len - have_[r]));
        have_[r] += unpack_elements<T>(p, std::span<T>(staging_[r].data() + have_[r], tile_len - have_[r]));
      }
      T acc = staging_[0][off];
      for (int r = 1; r < this->comm_.size(); ++r) acc = apply(op_, acc, staging_[r][off]);
      data_rcv = acc;
      if (off + 1 == tile_len) {
        std::fill(have_.begin(), have_.end(), 0);
        if (j + 1 < this->count_) grant_tile();
      }
    } else {
      if (off == 0) this->ctx_->take_packet(this->port_, OpType::kCredit, this->root_world_);
      this->buf_[this->fill_++] = data_snd;
      if (this->fill_ == this->buf_.size() || off + 1 == tile_len) {
        this->send_data(this->root_world_, {this->buf_.data(), this->fill_});
        this->fill_ = 0;
      }
    }
    this->end_call();
  }

 private:
  template <Element U>
  friend ReduceChannel<U> open_reduce_channel(RankContext&, std::size_t, ReduceOp, int, int, const Communicator&);

  void grant_tile() {
    for (int r = 0; r < this->comm_.size(); ++r) {
      if (r == this->root_) continue;
      this->ctx_->send_packet(this->port_, make_control(OpType::kCredit, this->ctx_->rank(),
                                                        this->comm_.world_rank(r), this->port_));
    }
  }

  ReduceOp op_ = ReduceOp::kAdd;
  std::size_t tile_ = 1;
  std::vector<std::vector<T>> staging_;  // per rank, one tile
  std::vector<std::size_t> have_;        // elements of the current tile received per rank
  std::array<bool, kMaxRanks> contributor_{};
};

template <Element T>
ReduceChannel<T> open_reduce_channel(RankContext& ctx, std::size_t count, ReduceOp op, int port, int root,
                                     const Communicator& comm) {
  const PortDecl& decl = ctx.port_decl(port);
  if (decl.kind == PortKind::kReduce && decl.op != op) {
    throw ContractViolation("port " + std::to_string(port) + " is declared with reduce op " +
                            std::string(to_string(decl.op)));
  }
  ReduceChannel<T> ch;
  ch.calls_ = count;
  ch.op_ = op;
  ch.tile_ = ctx.reduce_tile();
  ch.open(ctx, PortKind::kReduce, count, port, root, comm);
  if (ch.is_root()) {
    ch.staging_.assign(static_cast<std::size_t>(comm.size()), std::vector<T>(ch.tile_));
    ch.have_.assign(static_cast<std::size_t>(comm.size()), 0);
    for (int r = 0; r < comm.size(); ++r) {
      if (r != root) ch.contributor_[comm.world_rank(r)] = true;
    }
    if (count > 0) ch.grant_tile();
  }
  if (count == 0) ch.lease_.release();
  return ch;
}

}  // namespace smi
