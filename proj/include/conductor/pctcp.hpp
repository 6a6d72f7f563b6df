#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "conductor/rng.hpp"
#include "conductor/types.hpp"

namespace conductor {

// Priority-chain scheduler over the causal poset of messages. Messages are
// greedily partitioned into causally-ordered chains; chains carry distinct
// random priorities and d-1 change points demote the chain of the message
// delivered at that step to a reserved low priority.
class ChainPartitionSchedule {
 public:
  ChainPartitionSchedule(std::uint64_t seed, std::uint64_t n_bound, int depth)
      : priority_rng_(seed, 0), n_bound_(n_bound), depth_(depth) {
    if (depth < 1) throw InvalidDepth("depth must be >= 1");
    if (n_bound < static_cast<std::uint64_t>(depth))
      throw InvalidDepth("n_bound must be >= depth");
    // d-1 change points, uniform without replacement from 1..n_bound
    SplitRng cp_rng(seed, 1);
    std::set<std::uint64_t> points;
    while (points.size() < static_cast<std::size_t>(depth - 1))
      points.insert(1 + cp_rng.below(n_bound));
    change_points_.assign(points.begin(), points.end());
  }

  // Appends m to the first chain whose tail is a causal predecessor of m,
  // or opens a new chain with a fresh random priority.
  void register_message(MessageUid uid, const std::set<MessageUid>& predecessors) {
    if (chain_of_.count(uid)) throw DuplicateMessage("uid already registered");
    for (MessageUid p : predecessors)
      if (!chain_of_.count(p)) throw UnknownPredecessor("predecessor not registered");
    for (std::size_t c = 0; c < chains_.size(); ++c) {
      if (chains_[c].messages.empty()) continue;
      MessageUid tail = chains_[c].messages.back();
      if (predecessors.count(tail)) {
        chains_[c].messages.push_back(uid);
        chain_of_[uid] = c;
        return;
      }
    }
    Chain chain;
    chain.priority = fresh_priority();
    chain.messages.push_back(uid);
    chain_of_[uid] = chains_.size();
    chains_.push_back(std::move(chain));
  }

  bool is_registered(MessageUid uid) const { return chain_of_.count(uid) > 0; }

  // Head-most enabled message of the highest-priority chain that has one.
  std::optional<MessageUid> next_delivery(const std::set<MessageUid>& enabled) {
    std::vector<std::size_t> order(chains_.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return chains_[a].priority > chains_[b].priority;
    });
    for (std::size_t c : order) {
      for (MessageUid uid : chains_[c].messages) {
        if (delivered_.count(uid)) continue;
        if (enabled.count(uid)) {
          pending_ = uid;
          return uid;
        }
        break;  // chain order: do not look past the first undelivered message
      }
    }
    return std::nullopt;
  }

  void notify_delivered(MessageUid uid) {
    if (!pending_ || *pending_ != uid)
      throw OutOfOrderNotification("uid was not the last scheduled delivery");
    pending_.reset();
    delivered_.insert(uid);
    delivery_sequence_.push_back(uid);
    ++delivered_count_;
    for (std::size_t k = 0; k < change_points_.size(); ++k) {
      if (change_points_[k] == delivered_count_) {
        // k-th change point (1-based k+1): demote to the (k+1)-th lowest
        // reserved priority. Reserved values 1..d-1 sit below all regular
        // chain priorities, which start at depth_.
        chains_[chain_of_.at(uid)].priority = k + 1;
      }
    }
  }

  std::uint64_t delivered_count() const { return delivered_count_; }
  std::size_t width_estimate() const { return chains_.size(); }
  const std::vector<std::uint64_t>& change_points() const { return change_points_; }
  const std::vector<MessageUid>& delivery_sequence() const { return delivery_sequence_; }

  std::uint64_t chain_priority(MessageUid uid) const {
    return chains_.at(chain_of_.at(uid)).priority;
  }

  // Debug dump: chains, priorities, change points, realized deliveries.
  std::string dump() const {
    std::ostringstream out;
    out << "change_points:";
    for (auto p : change_points_) out << ' ' << p;
    out << '\n';
    for (std::size_t c = 0; c < chains_.size(); ++c) {
      out << "chain " << c << " priority " << chains_[c].priority << ":";
      for (MessageUid uid : chains_[c].messages) out << ' ' << uid;
      out << '\n';
    }
    out << "delivered:";
    for (MessageUid uid : delivery_sequence_) out << ' ' << uid;
    out << '\n';
    return out.str();
  }

 private:
  struct Chain {
    std::vector<MessageUid> messages;
    std::uint64_t priority = 0;
  };

  std::uint64_t fresh_priority() {
    // regular priorities live in [depth_, 2^62), distinct from each other
    // and from the reserved band 1..depth_-1
    std::uint64_t p;
    do {
      p = depth_ + priority_rng_.below((1ull << 62) - depth_);
    } while (!used_priorities_.insert(p).second);
    return p;
  }

  SplitRng priority_rng_;
  std::uint64_t n_bound_;
  int depth_;
  std::vector<std::uint64_t> change_points_;
  std::vector<Chain> chains_;
  std::map<MessageUid, std::size_t> chain_of_;
  std::set<MessageUid> delivered_;
  std::set<std::uint64_t> used_priorities_;
  std::vector<MessageUid> delivery_sequence_;
  std::uint64_t delivered_count_ = 0;
  std::optional<MessageUid> pending_;
};

}  // namespace conductor
