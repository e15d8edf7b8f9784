#pragma once

#include <algorithm>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "smi/errors.hpp"
#include "smi/packet.hpp"

namespace smi {

/// Group of ranks with its own 0-based numbering. Maps communicator ranks to
/// world ranks; the mapping is injective.
class Communicator {
 public:
  Communicator() = default;

  static Communicator world(int size) {
    std::vector<int> ranks(static_cast<std::size_t>(size));
    std::iota(ranks.begin(), ranks.end(), 0);
    return Communicator(std::move(ranks));
  }

  static Communicator from_world_ranks(std::vector<int> world_ranks) {
    auto sorted = world_ranks;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      throw ContractViolation("communicator lists a world rank twice");
    }
    if (!sorted.empty() && (sorted.front() < 0 || sorted.back() >= kMaxRanks)) {
      throw ContractViolation("communicator rank out of range");
    }
    return Communicator(std::move(world_ranks));
  }

  int size() const { return static_cast<int>(ranks_.size()); }
  const std::vector<int>& members() const { return ranks_; }

  int world_rank(int comm_rank) const {
    if (comm_rank < 0 || comm_rank >= size()) {
      throw ContractViolation("rank " + std::to_string(comm_rank) + " is outside a communicator of size " +
                              std::to_string(size()));
    }
    return ranks_[static_cast<std::size_t>(comm_rank)];
  }

  std::optional<int> rank_of(int world_rank) const {
    auto it = std::find(ranks_.begin(), ranks_.end(), world_rank);
    if (it == ranks_.end()) return std::nullopt;
    return static_cast<int>(it - ranks_.begin());
  }

  friend bool operator==(const Communicator&, const Communicator&) = default;

 private:
  explicit Communicator(std::vector<int> ranks) : ranks_(std::move(ranks)) {}
  std::vector<int> ranks_;
};

}  // namespace smi
