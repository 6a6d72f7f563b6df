#pragma once

#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "conductor/automaton.hpp"
#include "conductor/dsl.hpp"
#include "conductor/types.hpp"

namespace conductor::raft {

enum class Role { follower, candidate, leader };

struct RaftState {
  int term = 0;
  Role role = Role::follower;
  std::map<int, int> voted_for;          // term -> candidate granted
  std::set<int> votes_received;          // accepting voters in current term
  std::set<int> append_acks;             // ack senders for the replicated entry
  std::vector<std::string> log;
  bool committed = false;
  std::deque<MessageDraft> outbox;
  std::deque<InternalNote> notes;

  friend bool operator==(const RaftState&, const RaftState&) = default;
};

// Toy Raft replica: one election (possibly retried in higher terms by the
// replicas named in election_order) followed by replication of a single
// entry. Logical timeouts start elections at quiescence.
class RaftAutomaton : public ReplicaAutomaton {
 public:
  RaftAutomaton(int self, int n, std::vector<int> election_order = {0},
                std::string entry = "x1", int term_bound = 3)
      : self_(self), n_(n), election_order_(std::move(election_order)),
        entry_(std::move(entry)), term_bound_(term_bound) {
    if (n < 3 || n % 2 == 0) throw ConfigError("raft toy requires odd n >= 3");
  }

  ReplicaId id() const override { return {self_, "r" + std::to_string(self_)}; }

  StateBox initial_state() const override { return StateBox(RaftState{}); }

  bool is_final(const StateBox& box) const override {
    const auto& s = box.as<RaftState>();
    if (!s.outbox.empty() || !s.notes.empty()) return false;
    return s.committed || s.term > term_bound_;
  }

  std::optional<StepOutput> step(const StateBox& box, const StepInput& input) const override {
    const auto& s = box.as<RaftState>();
    if (is_final(box)) return std::nullopt;
    if (std::holds_alternative<Bottom>(input)) return step_bottom(s);
    if (std::holds_alternative<TimeoutInput>(input)) return step_timeout(s);
    return step_message(s, *std::get<const Message*>(input));
  }

  int majority() const { return n_ / 2 + 1; }

 private:
  bool can_campaign(const RaftState& s) const {
    for (int r : election_order_)
      if (r == self_) return !s.committed && s.role != Role::leader && s.term < term_bound_;
    return false;
  }

  std::optional<StepOutput> step_bottom(const RaftState& s) const {
    if (!s.outbox.empty()) {
      StepOutput out;
      RaftState next = s;
      out.send = next.outbox.front();
      next.outbox.pop_front();
      out.next = StateBox(std::move(next));
      return out;
    }
    if (!s.notes.empty()) {
      StepOutput out;
      RaftState next = s;
      out.note = next.notes.front();
      next.notes.pop_front();
      out.next = StateBox(std::move(next));
      return out;
    }
    return std::nullopt;
  }

  std::optional<StepOutput> step_timeout(const RaftState& s) const {
    if (!s.outbox.empty() || !s.notes.empty() || !can_campaign(s)) return std::nullopt;
    RaftState next = s;
    next.term += 1;
    next.role = Role::candidate;
    next.votes_received = {self_};
    next.voted_for[next.term] = self_;
    broadcast(next, "RequestVote", {{"term", std::to_string(next.term)}});
    StepOutput out;
    out.note = InternalNote{"ElectionStarted", {{"term", std::to_string(next.term)}}};
    out.next = StateBox(std::move(next));
    return out;
  }

  std::optional<StepOutput> step_message(const RaftState& s, const Message& m) const {
    if (!s.outbox.empty() || !s.notes.empty()) return std::nullopt;
    RaftState next = s;
    int t = term_of(m);
    if (m.mtype == "RequestVote") {
      if (t > next.term) {
        next.term = t;
        next.role = Role::follower;
        next.votes_received.clear();
      }
      bool granted = t == next.term && (!next.voted_for.count(t) || next.voted_for[t] == m.from.id);
      if (granted) next.voted_for[t] = m.from.id;
      next.outbox.push_back({m.from, "RequestVoteReply",
                             {{"term", std::to_string(t)}, {"granted", granted ? "1" : "0"}}});
    } else if (m.mtype == "RequestVoteReply") {
      if (next.role == Role::candidate && t == next.term && m.field("granted") == "1") {
        next.votes_received.insert(m.from.id);
        if (static_cast<int>(next.votes_received.size()) >= majority()) {
          next.role = Role::leader;
          next.log.push_back(entry_);
          next.append_acks = {self_};
          next.notes.push_back({"LeaderElected", {{"term", std::to_string(next.term)}}});
          broadcast(next, "AppendEntries",
                    {{"term", std::to_string(next.term)}, {"entry", entry_}});
        }
      }
    } else if (m.mtype == "AppendEntries") {
      if (t >= next.term) {
        next.term = t;
        next.role = Role::follower;
        if (next.log.empty()) next.log.push_back(m.field("entry"));
        next.outbox.push_back({m.from, "AppendEntriesReply", {{"term", std::to_string(t)}}});
      }
    } else if (m.mtype == "AppendEntriesReply") {
      if (next.role == Role::leader && t == next.term && !next.committed) {
        next.append_acks.insert(m.from.id);
        if (static_cast<int>(next.append_acks.size()) >= majority()) {
          next.committed = true;
          next.notes.push_back({"EntryCommitted", {{"term", std::to_string(next.term)}}});
          broadcast(next, "CommitNotify", {{"term", std::to_string(next.term)}});
        }
      }
    } else if (m.mtype == "CommitNotify") {
      if (t >= next.term) {
        next.term = t;
        if (next.log.empty()) next.log.push_back(entry_);
        next.committed = true;
        next.notes.push_back({"EntryCommitted", {{"term", std::to_string(t)}}});
      }
    }
    StepOutput out;
    out.next = StateBox(std::move(next));
    return out;
  }

  void broadcast(RaftState& s, const std::string& mtype, FieldMap payload) const {
    for (int r = 0; r < n_; ++r) {
      if (r == self_) continue;
      s.outbox.push_back({ReplicaId{r, "r" + std::to_string(r)}, mtype, payload});
    }
  }

  static int term_of(const Message& m) {
    std::string t = m.field("term");
    return t.empty() ? 0 : std::stoi(t);
  }

  int self_;
  int n_;
  std::vector<int> election_order_;
  std::string entry_;
  int term_bound_;
};

inline ProtocolSetup make_setup(int n, std::vector<int> election_order = {0},
                                const std::string& entry = "x1", int term_bound = 3) {
  ProtocolSetup setup;
  for (int r = 0; r < n; ++r)
    setup.automata.push_back(
        std::make_shared<RaftAutomaton>(r, n, election_order, entry, term_bound));
  return setup;
}

inline Condition message_term(int t) {
  return Condition("MessageTerm(" + std::to_string(t) + ")",
                   [t](const Event& e, const MonitorContext&) {
                     return e.is_message_event() && e.message->field("term") == std::to_string(t);
                   });
}

inline Condition leader_elected(int term = -1) {
  return Condition("LeaderElected(" + std::to_string(term) + ")",
                   [term](const Event& e, const MonitorContext&) {
                     return e.kind == EventKind::internal && e.note &&
                            e.note->name == "LeaderElected" &&
                            (term < 0 || e.note->param("term") == std::to_string(term));
                   });
}

// True when two different replicas have announced leadership for the same
// term anywhere in the observed event stream.
inline Condition election_safety_violated() {
  return Condition("ElectionSafetyViolated", [](const Event& e, const MonitorContext& ctx) {
    auto is_elect = [](const Event& ev) {
      return ev.kind == EventKind::internal && ev.note && ev.note->name == "LeaderElected";
    };
    if (!is_elect(e)) return false;
    for (const Event& past : ctx.event_history) {
      if (is_elect(past) && past.note->param("term") == e.note->param("term") &&
          past.replica.id != e.replica.id)
        return true;
    }
    return false;
  });
}

inline void register_dsl(DslRegistry& reg) {
  reg.add_condition("MessageTerm", [](const auto& a) { return message_term(std::stoi(a.at(0))); });
  reg.add_condition("LeaderElected", [](const auto& a) {
    return leader_elected(a.empty() ? -1 : std::stoi(a.at(0)));
  });
  reg.add_condition("ElectionSafetyViolated",
                    [](const auto&) { return election_safety_violated(); });
}

}  // namespace conductor::raft
