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

namespace conductor::pbft {

// Per-view bookkeeping. Votes are keyed by sender and carry the request the
// sender voted for, so corrupted votes do not count toward a quorum.
struct ViewTally {
  std::optional<std::string> preprepare_request;
  std::map<int, std::string> prepare_votes;
  std::map<int, std::string> commit_votes;
  bool sent_prepare = false;
  bool sent_commit = false;

  friend bool operator==(const ViewTally&, const ViewTally&) = default;
};

struct PbftState {
  int view = 0;
  bool decided = false;
  std::string decided_request;
  int last_vc_target = 0;                 // highest view-change target requested
  std::map<int, ViewTally> tallies;
  std::map<int, std::set<int>> vc_votes;  // target view -> senders (others only)
  std::set<int> newview_sent;
  std::deque<MessageDraft> outbox;
  std::deque<InternalNote> notes;

  friend bool operator==(const PbftState&, const PbftState&) = default;
};

// One-request toy PBFT replica. The client request is part of the initial
// state; broadcasts exclude the sender, whose own vote is applied locally.
class PbftAutomaton : public ReplicaAutomaton {
 public:
  PbftAutomaton(int self, int n, int f, std::string request, int view_bound = 3)
      : self_(self), n_(n), f_(f), request_(std::move(request)), view_bound_(view_bound) {
    if (n < 3 * f + 1) throw ConfigError("pbft requires n >= 3f+1");
  }

  ReplicaId id() const override { return {self_, "r" + std::to_string(self_)}; }

  StateBox initial_state() const override {
    PbftState s;
    s.view = -1;
    enter_view(s, 0, leader_of(0) == self_);
    return StateBox(s);
  }

  bool is_final(const StateBox& box) const override {
    const auto& s = box.as<PbftState>();
    if (!s.outbox.empty() || !s.notes.empty()) return false;
    return s.decided || s.last_vc_target >= view_bound_;
  }

  std::optional<StepOutput> step(const StateBox& box, const StepInput& input) const override {
    const auto& s = box.as<PbftState>();
    if (is_final(box)) return std::nullopt;
    if (std::holds_alternative<Bottom>(input)) return step_bottom(s);
    if (std::holds_alternative<TimeoutInput>(input)) return step_timeout(s);
    return step_message(s, *std::get<const Message*>(input));
  }

  int leader_of(int view) const { return view % n_; }
  int quorum() const { return 2 * f_ + 1; }

 private:
  bool bottom_pending(const PbftState& s) const { return !s.outbox.empty() || !s.notes.empty(); }

  std::optional<StepOutput> step_bottom(const PbftState& s) const {
    if (!s.outbox.empty()) {
      StepOutput out;
      PbftState next = s;
      out.send = next.outbox.front();
      next.outbox.pop_front();
      out.next = StateBox(std::move(next));
      return out;
    }
    if (!s.notes.empty()) {
      StepOutput out;
      PbftState next = s;
      out.note = next.notes.front();
      next.notes.pop_front();
      out.next = StateBox(std::move(next));
      return out;
    }
    return std::nullopt;
  }

  std::optional<StepOutput> step_timeout(const PbftState& s) const {
    if (bottom_pending(s) || s.decided) return std::nullopt;
    int target = std::max(s.view, s.last_vc_target) + 1;
    if (target > view_bound_) return std::nullopt;
    PbftState next = s;
    next.last_vc_target = target;
    broadcast(next, "ViewChange", {{"view", std::to_string(target)}});
    enter_view(next, target, false);
    StepOutput out;
    out.note = InternalNote{"Timeout", {{"view", std::to_string(target)}}};
    out.next = StateBox(std::move(next));
    return out;
  }

  std::optional<StepOutput> step_message(const PbftState& s, const Message& m) const {
    if (bottom_pending(s)) return std::nullopt;  // receives disabled while bottom steps pend
    PbftState next = s;
    int v = view_of(m);
    if (m.mtype == "PrePrepare") {
      auto& t = next.tallies[v];
      if (!t.preprepare_request) t.preprepare_request = m.field("request");
      maybe_act(next, v);
    } else if (m.mtype == "Prepare") {
      next.tallies[v].prepare_votes.emplace(m.from.id, m.field("request"));
      maybe_act(next, v);
    } else if (m.mtype == "Commit") {
      next.tallies[v].commit_votes.emplace(m.from.id, m.field("request"));
      maybe_act(next, v);
    } else if (m.mtype == "ViewChange") {
      if (m.from.id != self_) next.vc_votes[v].insert(m.from.id);
      if (leader_of(v) == self_ && v >= next.view && !next.decided &&
          !next.newview_sent.count(v) &&
          static_cast<int>(next.vc_votes[v].size()) >= 2 * f_) {
        next.newview_sent.insert(v);
        broadcast(next, "NewView", {{"view", std::to_string(v)}});
        enter_view(next, v, true);
      }
    } else if (m.mtype == "NewView") {
      if (v > next.view) enter_view(next, v, false);
    }
    StepOutput out;
    out.next = StateBox(std::move(next));
    return out;
  }

  void enter_view(PbftState& s, int v, bool propose) const {
    if (v < s.view) return;
    s.view = v;
    if (propose) {
      auto& t = s.tallies[v];
      if (!t.preprepare_request) t.preprepare_request = request_;
      s.notes.push_back({"Propose", {{"request", request_}, {"view", std::to_string(v)}}});
      broadcast(s, "PrePrepare",
                {{"request", request_}, {"view", std::to_string(v)}, {"index", "0"}});
    }
    maybe_act(s, v);
  }

  // Advance through the prepare/commit/decide pipeline of the current view.
  void maybe_act(PbftState& s, int v) const {
    if (v != s.view) return;
    auto& t = s.tallies[v];
    if (t.preprepare_request && !t.sent_prepare) {
      t.sent_prepare = true;
      t.prepare_votes.emplace(self_, *t.preprepare_request);
      broadcast(s, "Prepare",
                {{"request", *t.preprepare_request}, {"view", std::to_string(v)}, {"index", "0"}});
    }
    if (!t.preprepare_request) return;
    const std::string& req = *t.preprepare_request;
    if (t.sent_prepare && !t.sent_commit && matching(t.prepare_votes, req) >= quorum()) {
      t.sent_commit = true;
      t.commit_votes.emplace(self_, req);
      broadcast(s, "Commit", {{"request", req}, {"view", std::to_string(v)}, {"index", "0"}});
    }
    if (t.sent_commit && !s.decided && matching(t.commit_votes, req) >= quorum()) {
      s.decided = true;
      s.decided_request = req;
      s.notes.push_back(
          {"AddToLog", {{"request", req}, {"view", std::to_string(v)}, {"index", "0"}}});
    }
  }

  void broadcast(PbftState& s, const std::string& mtype, FieldMap payload) const {
    for (int r = 0; r < n_; ++r) {
      if (r == self_) continue;  // own vote is applied locally
      s.outbox.push_back({ReplicaId{r, "r" + std::to_string(r)}, mtype, payload});
    }
  }

  static int view_of(const Message& m) { return std::stoi(m.field("view").empty() ? "0" : m.field("view")); }

  static int matching(const std::map<int, std::string>& votes, const std::string& req) {
    int count = 0;
    for (const auto& [sender, r] : votes)
      if (r == req) ++count;
    return count;
  }

  int self_;
  int n_;
  int f_;
  std::string request_;
  int view_bound_;
};

inline ProtocolSetup make_setup(int n, int f, const std::string& request = "alpha",
                                int view_bound = 3) {
  ProtocolSetup setup;
  for (int r = 0; r < n; ++r)
    setup.automata.push_back(std::make_shared<PbftAutomaton>(r, n, f, request, view_bound));
  return setup;
}

// Protocol-specific DSL primitives.
inline Condition message_view(int v) {
  return Condition("MessageView(" + std::to_string(v) + ")",
                   [v](const Event& e, const MonitorContext&) {
                     return e.is_message_event() && e.message->field("view") == std::to_string(v);
                   });
}

inline Condition add_to_log(const std::string& request) {
  return Condition("AddToLog(" + request + ")", [request](const Event& e, const MonitorContext&) {
    return e.kind == EventKind::internal && e.note && e.note->name == "AddToLog" &&
           e.note->param("request") == request;
  });
}

// True when two decisions for the same index carry different requests
// anywhere in the observed event stream.
inline Condition conflicting_decisions() {
  return Condition("ConflictingDecisions", [](const Event& e, const MonitorContext& ctx) {
    if (e.kind != EventKind::internal || !e.note || e.note->name != "AddToLog") return false;
    for (const Event& past : ctx.event_history) {
      if (past.kind != EventKind::internal || !past.note || past.note->name != "AddToLog") continue;
      if (past.note->param("index") == e.note->param("index") &&
          past.note->param("request") != e.note->param("request"))
        return true;
    }
    return false;
  });
}

// True once >= k distinct replicas have emitted a send of the given message
// type and view (scans the observed event history; the current event counts).
inline Condition distinct_senders_gte(const std::string& mtype, int view, int k) {
  return Condition(
      "DistinctSendersGte(" + mtype + "," + std::to_string(view) + "," + std::to_string(k) + ")",
      [mtype, view, k](const Event& e, const MonitorContext& ctx) {
        std::set<int> senders;
        auto tally = [&](const Event& ev) {
          if (ev.kind == EventKind::send && ev.message->mtype == mtype &&
              ev.message->field("view") == std::to_string(view))
            senders.insert(ev.message->from.id);
        };
        for (const Event& past : ctx.event_history) tally(past);
        tally(e);
        return static_cast<int>(senders.size()) >= k;
      });
}

// True once >= k receive events of the given message type and view have been
// observed (the current event counts).
inline Condition receives_gte(const std::string& mtype, int view, int k) {
  return Condition(
      "ReceivesGte(" + mtype + "," + std::to_string(view) + "," + std::to_string(k) + ")",
      [mtype, view, k](const Event& e, const MonitorContext& ctx) {
        int count = 0;
        auto tally = [&](const Event& ev) {
          if (ev.kind == EventKind::receive && ev.message->mtype == mtype &&
              ev.message->field("view") == std::to_string(view))
            ++count;
        };
        for (const Event& past : ctx.event_history) tally(past);
        tally(e);
        return count >= k;
      });
}

// True once >= k replicas have emitted an AddToLog decision.
inline Condition decisions_gte(int k) {
  return Condition("DecisionsGte(" + std::to_string(k) + ")",
                   [k](const Event& e, const MonitorContext& ctx) {
                     int count = 0;
                     auto tally = [&](const Event& ev) {
                       if (ev.kind == EventKind::internal && ev.note &&
                           ev.note->name == "AddToLog")
                         ++count;
                     };
                     for (const Event& past : ctx.event_history) tally(past);
                     tally(e);
                     return count >= k;
                   });
}

// Byzantine mutation from the running example: replace a Prepare with a nil
// request. A fresh fictitious message is constructed; the original is blocked.
inline Action change_prepare_to_nil() {
  return Action("ChangePrepareToNil", ActionKind::byzantine, [](const Event& e, MonitorContext&) {
    ActionResult r;
    if (e.kind == EventKind::send && e.message->mtype == "Prepare") {
      Message forged = *e.message;
      forged.uid = 0;  // driver assigns a fresh uid on injection
      forged.fictitious = true;
      forged.payload["request"] = "nil";
      r.deliver.push_back(std::move(forged));
      r.block = true;
    }
    return r;
  });
}

inline void register_dsl(DslRegistry& reg) {
  reg.add_condition("MessageView",
                    [](const auto& a) { return message_view(std::stoi(a.at(0))); });
  reg.add_condition("AddToLog", [](const auto& a) { return add_to_log(a.at(0)); });
  reg.add_condition("ConflictingDecisions", [](const auto&) { return conflicting_decisions(); });
  reg.add_condition("DistinctSendersGte", [](const auto& a) {
    return distinct_senders_gte(a.at(0), std::stoi(a.at(1)), std::stoi(a.at(2)));
  });
  reg.add_condition("ReceivesGte", [](const auto& a) {
    return receives_gte(a.at(0), std::stoi(a.at(1)), std::stoi(a.at(2)));
  });
  reg.add_condition("DecisionsGte", [](const auto& a) { return decisions_gte(std::stoi(a.at(0))); });
  reg.add_action("ChangePrepareToNil", [](const auto&) { return change_prepare_to_nil(); });
}

}  // namespace conductor::pbft
