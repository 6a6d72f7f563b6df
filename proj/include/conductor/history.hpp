#pragma once

#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "conductor/core.hpp"
#include "conductor/types.hpp"

namespace conductor {

// History H = (E, <) of an execution: the events plus the happens-before
// partial order stored as a full reachability matrix (desk-scale traces).
class History {
 public:
  History() = default;

  // events must already be in a valid emission order (program order per
  // replica consistent with seq). Edges beyond program order and
  // send/receive matching are derived here.
  static History build(std::vector<Event> events) {
    History h;
    h.events_ = std::move(events);
    const std::size_t n = h.events_.size();
    for (std::size_t i = 0; i < n; ++i) {
      h.index_.emplace(key_of(h.events_[i]), i);
      const Event& e = h.events_[i];
      if (e.message) {
        auto& pair = h.pairs_[e.message->uid];
        if (e.kind == EventKind::send) pair.first = i;
        if (e.kind == EventKind::receive) pair.second = i;
      }
    }

    std::vector<std::vector<bool>> edge(n, std::vector<bool>(n, false));
    std::map<int, std::size_t> last_on_replica;
    for (std::size_t i = 0; i < n; ++i) {
      int r = h.events_[i].replica.id;
      auto it = last_on_replica.find(r);
      if (it != last_on_replica.end()) edge[it->second][i] = true;
      last_on_replica[r] = i;
      h.per_replica_[r].push_back(i);
    }
    for (const auto& [uid, pair] : h.pairs_) {
      if (pair.first && pair.second) edge[*pair.first][*pair.second] = true;
    }

    // transitive closure
    h.hb_ = edge;
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t i = 0; i < n; ++i)
        if (h.hb_[i][k])
          for (std::size_t j = 0; j < n; ++j)
            if (h.hb_[k][j]) h.hb_[i][j] = true;

    for (std::size_t i = 0; i < n; ++i)
      if (h.hb_[i][i]) throw MalformedTrace("happens-before is cyclic");
    return h;
  }

  std::size_t size() const { return events_.size(); }
  const std::vector<Event>& events() const { return events_; }
  const Event& event(std::size_t i) const { return events_.at(i); }

  bool contains(const EventKey& k) const { return index_.count(k) > 0; }
  std::optional<std::size_t> find(const EventKey& k) const {
    auto it = index_.find(k);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  bool happens_before(std::size_t a, std::size_t b) const { return hb_[a][b]; }
  bool happens_before(const EventKey& a, const EventKey& b) const {
    auto ia = find(a);
    auto ib = find(b);
    return ia && ib && hb_[*ia][*ib];
  }

  const std::map<int, std::vector<std::size_t>>& per_replica() const { return per_replica_; }

  std::optional<std::size_t> send_of(MessageUid uid) const {
    auto it = pairs_.find(uid);
    return it == pairs_.end() ? std::nullopt : it->second.first;
  }
  std::optional<std::size_t> receive_of(MessageUid uid) const {
    auto it = pairs_.find(uid);
    return it == pairs_.end() ? std::nullopt : it->second.second;
  }

 private:
  std::vector<Event> events_;
  std::vector<std::vector<bool>> hb_;
  std::map<EventKey, std::size_t> index_;
  std::map<int, std::vector<std::size_t>> per_replica_;
  std::map<MessageUid, std::pair<std::optional<std::size_t>, std::optional<std::size_t>>> pairs_;
};

inline History history_of(const ExecutionTrace& trace) {
  return History::build(trace.events());
}

// Prefix relation between histories: downward closure plus preservation of
// happens-before, with events identified by (replica, seq).
inline bool is_prefix(const History& h1, const History& h2) {
  // (1) downward closure
  for (std::size_t i = 0; i < h1.size(); ++i) {
    auto i2 = h2.find(key_of(h1.event(i)));
    if (!i2) return false;
    for (std::size_t j2 = 0; j2 < h2.size(); ++j2) {
      if (!h2.happens_before(j2, *i2)) continue;
      auto j1 = h1.find(key_of(h2.event(j2)));
      if (!j1 || !h1.happens_before(*j1, i)) return false;
    }
  }
  // (2) happens-before preservation on the common set
  for (std::size_t i = 0; i < h1.size(); ++i) {
    for (std::size_t j = 0; j < h1.size(); ++j) {
      bool in1 = h1.happens_before(i, j);
      bool in2 = h2.happens_before(key_of(h1.event(i)), key_of(h1.event(j)));
      if (in1 != in2) return false;
    }
  }
  return true;
}

// M_rho: uids of messages with a receive event in h.
inline std::set<MessageUid> delivered_messages(const History& h) {
  std::set<MessageUid> out;
  for (const Event& e : h.events())
    if (e.kind == EventKind::receive) out.insert(e.message->uid);
  return out;
}

// O_H(m): events strictly happens-before the receive event of m.
inline std::set<std::size_t> causal_past_of_receive(const History& h, MessageUid uid) {
  auto recv = h.receive_of(uid);
  if (!recv) throw NotDelivered("message " + std::to_string(uid) + " has no receive event");
  std::set<std::size_t> out;
  for (std::size_t i = 0; i < h.size(); ++i)
    if (h.happens_before(i, *recv)) out.insert(i);
  return out;
}

// Adv_H: uids received but never sent within h.
inline std::set<MessageUid> adversarial_messages(const History& h) {
  std::set<MessageUid> out;
  for (const Event& e : h.events()) {
    if (e.kind != EventKind::receive) continue;
    if (!h.send_of(e.message->uid)) out.insert(e.message->uid);
  }
  return out;
}

// Export: the event records followed by an adjacency section of hb edges.
inline std::string history_to_text(const History& h) {
  std::ostringstream out;
  for (std::size_t i = 0; i < h.size(); ++i) {
    nlohmann::json j = event_to_json(h.event(i));
    j["record"] = "event";
    j["index"] = i;
    out << j.dump() << '\n';
  }
  for (std::size_t i = 0; i < h.size(); ++i) {
    nlohmann::json edges = nlohmann::json::array();
    for (std::size_t j = 0; j < h.size(); ++j)
      if (h.happens_before(i, j)) edges.push_back(j);
    out << nlohmann::json{{"record", "hb"}, {"from", i}, {"to", edges}}.dump() << '\n';
  }
  return out.str();
}

}  // namespace conductor
