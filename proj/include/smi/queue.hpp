#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>
#include <string>

#include "smi/packet.hpp"

namespace smi {

/// Wakes blocked rank procedures in free-running mode when an application
/// queue changes.
class Signal {
 public:
  void notify() {
    {
      std::lock_guard lk(mu_);
      ++generation_;
    }
    cv_.notify_all();
  }

  /// Waits until `ready()` holds, `stop()` holds or `timeout` elapses.
  template <class Ready, class Stop>
  void wait(Ready&& ready, Stop&& stop, std::chrono::microseconds timeout) {
    std::unique_lock lk(mu_);
    const auto gen = generation_;
    if (ready() || stop()) return;
    cv_.wait_for(lk, timeout, [&] { return generation_ != gen; });
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::uint64_t generation_ = 0;
};

/// Bounded FIFO of packets. An entry pushed at cycle t becomes visible to the
/// consumer at t + latency; capacity counts every stored entry, visible or not.
/// A push into a full queue fails: producers stall, nothing is dropped.
class PacketQueue {
 public:
  PacketQueue(std::string name, std::size_t capacity, std::uint64_t latency = 1)
      : name_(std::move(name)), capacity_(capacity), latency_(latency) {}

  PacketQueue(const PacketQueue&) = delete;
  PacketQueue& operator=(const PacketQueue&) = delete;

  const std::string& name() const { return name_; }
  std::size_t capacity() const { return capacity_; }
  std::uint64_t latency() const { return latency_; }

  std::size_t size() const {
    std::lock_guard lk(mu_);
    return items_.size();
  }
  bool full() const { return size() >= capacity_; }
  bool empty() const { return size() == 0; }
  std::size_t high_water() const {
    std::lock_guard lk(mu_);
    return high_water_;
  }
  std::uint64_t pushed() const { return pushed_.load(std::memory_order_relaxed); }

  std::optional<NetworkPacket> peek(std::uint64_t now) const {
    std::lock_guard lk(mu_);
    if (items_.empty() || items_.front().ready_at > now) return std::nullopt;
    return items_.front().packet;
  }

  bool visible(std::uint64_t now) const {
    std::lock_guard lk(mu_);
    return !items_.empty() && items_.front().ready_at <= now;
  }

  bool try_push(const NetworkPacket& p, std::uint64_t now) {
    {
      std::lock_guard lk(mu_);
      if (items_.size() >= capacity_) return false;
      items_.push_back({p, now + latency_});
      high_water_ = std::max(high_water_, items_.size());
    }
    pushed_.fetch_add(1, std::memory_order_relaxed);
    if (signal_) signal_->notify();
    return true;
  }

  std::optional<NetworkPacket> try_pop(std::uint64_t now) {
    std::optional<NetworkPacket> out;
    {
      std::lock_guard lk(mu_);
      if (items_.empty() || items_.front().ready_at > now) return std::nullopt;
      out = items_.front().packet;
      items_.pop_front();
    }
    if (signal_) signal_->notify();
    return out;
  }

  void attach(Signal* s) { signal_ = s; }

 private:
  struct Entry {
    NetworkPacket packet;
    std::uint64_t ready_at;
  };

  std::string name_;
  std::size_t capacity_;
  std::uint64_t latency_;
  mutable std::mutex mu_;
  std::deque<Entry> items_;
  std::size_t high_water_ = 0;
  std::atomic<std::uint64_t> pushed_{0};
  Signal* signal_ = nullptr;
};

}  // namespace smi
