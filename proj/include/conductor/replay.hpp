#pragma once

#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "conductor/core.hpp"
#include "conductor/history.hpp"
#include "conductor/rng.hpp"

namespace conductor {

// Monitor that steers a fresh run so that its history stays a prefix of a
// recorded target history. All sends are blocked; a message is released once
// every event of its recorded causal past has been observed in the live run.
// Live and target events correspond by (replica, seq); live and target
// messages by (sender, per-sender send index).
class ReplayMonitor {
 public:
  ReplayMonitor() = default;

  static ReplayMonitor synthesize(const ExecutionTrace& trace) {
    if (!trace.complete)
      throw IncompleteHistory("replay monitor requires the history of a complete run");
    ReplayMonitor rm;
    rm.target_ = history_of(trace);
    rm.delivered_ = delivered_messages(rm.target_);
    rm.adversarial_ = adversarial_messages(rm.target_);
    for (MessageUid uid : rm.delivered_)
      rm.causal_req_[uid] = causal_past_of_receive(rm.target_, uid);
    for (const Event& e : rm.target_.events())
      if (e.kind == EventKind::send)
        rm.target_sends_[e.message->from.id].push_back(e.message->uid);
    for (MessageUid uid : rm.adversarial_) {
      auto recv = rm.target_.receive_of(uid);
      rm.adv_content_[uid] = *rm.target_.event(*recv).message;
    }
    rm.reset();
    return rm;
  }

  const History& target() const { return target_; }

  // Drop the causal-past gate for one target message (fault injection used
  // to exercise the checker itself).
  void mutate_gate(MessageUid target_uid) { mutated_.insert(target_uid); }

  // A target message whose recorded causal past is largest: the most
  // constrained gate, and so the most effective one to mutate.
  std::optional<MessageUid> pick_gate_candidate() const {
    std::optional<MessageUid> best;
    std::size_t best_size = 0;
    for (const auto& [uid, past] : causal_req_) {
      if (adversarial_.count(uid)) continue;
      if (past.size() >= best_size) {
        best = uid;
        best_size = past.size();
      }
    }
    return best;
  }

  void reset() {
    observed_.clear();
    pool_.clear();
    released_.clear();
    live_send_count_.clear();
    live_to_target_.clear();
    target_to_live_.clear();
    anomaly_.clear();
  }

  bool has_anomaly() const { return !anomaly_.empty(); }
  const std::string& anomaly() const { return anomaly_; }

  // A release instruction: either a live pooled message (by live uid) or a
  // fictitious message to inject (content verbatim from the target).
  struct Release {
    std::optional<MessageUid> live_uid;
    std::optional<Message> inject;
    MessageUid target_uid = 0;
  };

  // Monitor step on a live event: updates the observed set and the mapped
  // pool, then returns every message whose release gate now holds.
  std::vector<Release> on_event(const Event& e) {
    if (e.kind == EventKind::send) {
      auto& count = live_send_count_[e.replica.id];
      auto it = target_sends_.find(e.replica.id);
      if (it == target_sends_.end() || count >= it->second.size()) {
        note_anomaly("send beyond target history at replica " + std::to_string(e.replica.id));
      } else {
        MessageUid tuid = it->second[count];
        live_to_target_[e.message->uid] = tuid;
        target_to_live_[tuid] = e.message->uid;
        pool_.insert(tuid);
      }
      ++count;
    }
    auto idx = target_.find(key_of(e));
    if (idx) observed_.insert(*idx);
    else note_anomaly("live event outside target history");
    return collect_releases();
  }

  // Releases whose gate holds before any live event (e.g. adversarial
  // messages with an empty causal past).
  std::vector<Release> initial_releases() { return collect_releases(); }

  MessageUid target_uid_of(MessageUid live_uid) const {
    auto it = live_to_target_.find(live_uid);
    return it == live_to_target_.end() ? 0 : it->second;
  }

  void record_injection(MessageUid target_uid, MessageUid live_uid) {
    live_to_target_[live_uid] = target_uid;
    target_to_live_[target_uid] = live_uid;
  }

 private:
  void note_anomaly(const std::string& why) {
    if (anomaly_.empty()) anomaly_ = why;
  }

  bool gate_holds(MessageUid tuid) const {
    if (!delivered_.count(tuid)) return false;
    if (mutated_.count(tuid)) return true;
    const auto& past = causal_req_.at(tuid);
    for (std::size_t i : past)
      if (!observed_.count(i)) return false;
    return true;
  }

  std::vector<Release> collect_releases() {
    std::vector<Release> out;
    for (MessageUid tuid : pool_) {
      if (released_.count(tuid) || !gate_holds(tuid)) continue;
      Release r;
      r.target_uid = tuid;
      r.live_uid = target_to_live_.at(tuid);
      out.push_back(r);
    }
    for (MessageUid tuid : adversarial_) {
      if (released_.count(tuid) || !gate_holds(tuid)) continue;
      Release r;
      r.target_uid = tuid;
      r.inject = adv_content_.at(tuid);
      r.inject->uid = 0;  // driver assigns a fresh live uid
      r.inject->fictitious = true;
      out.push_back(r);
    }
    for (const Release& r : out) {
      released_.insert(r.target_uid);
      pool_.erase(r.target_uid);
    }
    return out;
  }

  History target_;
  std::set<MessageUid> delivered_;
  std::set<MessageUid> adversarial_;
  std::map<MessageUid, std::set<std::size_t>> causal_req_;
  std::map<int, std::vector<MessageUid>> target_sends_;
  std::map<MessageUid, Message> adv_content_;
  std::set<MessageUid> mutated_;

  // per-trial state
  std::set<std::size_t> observed_;
  std::set<MessageUid> pool_;      // target uids of live messages in transit
  std::set<MessageUid> released_;
  std::map<int, std::size_t> live_send_count_;
  std::map<MessageUid, MessageUid> live_to_target_;
  std::map<MessageUid, MessageUid> target_to_live_;
  std::string anomaly_;
};

// ---------------------------------------------------------------------------
// Randomized replay trials

struct ReplayTrial {
  bool prefix = false;
  bool equal = false;
  bool complete = false;
  std::size_t live_events = 0;
  std::string failure;       // first reason the prefix check failed
  std::vector<Event> events;
};

// One product run steered by the replay monitor, with residual choices
// (which enabled move fires next) resolved uniformly at random.
inline ReplayTrial replay_run(const ProtocolSetup& setup, ReplayMonitor rm,
                              std::uint64_t seed, std::uint64_t budget = 20000) {
  ReplayTrial trial;
  rm.reset();
  ProtocolConfiguration config = ProtocolConfiguration::initial(setup);
  std::deque<Event> queue;
  SplitRng rng(seed, 2);

  auto apply_releases = [&](std::vector<ReplayMonitor::Release> releases) {
    for (auto& r : releases) {
      if (r.live_uid) {
        auto it = config.pool.find(*r.live_uid);
        if (it == config.pool.end()) continue;
        Message m = it->second;
        config.pool.erase(it);
        config.inboxes[m.to.id].push_back(std::move(m));
      } else if (r.inject) {
        Message m = *r.inject;
        m.uid = config.next_uid++;
        rm.record_injection(r.target_uid, m.uid);
        config.inboxes[m.to.id].push_back(std::move(m));
      }
    }
  };

  apply_releases(rm.initial_releases());

  struct Move {
    enum class Kind { monitor, receive, bottom } kind;
    int replica = -1;
  };

  std::uint64_t used = 0;
  while (used < budget && !is_complete(config, setup)) {
    std::vector<Move> moves;
    if (!queue.empty()) moves.push_back({Move::Kind::monitor, -1});
    for (int r = 0; r < setup.size(); ++r) {
      const ReplicaAutomaton& a = setup.at(r);
      if (a.is_final(config.states[r])) continue;
      if (a.bottom_enabled(config.states[r])) moves.push_back({Move::Kind::bottom, r});
      else if (!config.inboxes[r].empty() &&
               a.step(config.states[r], StepInput{&config.inboxes[r].front()}))
        moves.push_back({Move::Kind::receive, r});
    }
    if (moves.empty()) {
      // quiescence: logical timeout on a random enabled replica
      std::vector<int> enabled;
      for (int r = 0; r < setup.size(); ++r)
        if (setup.at(r).timeout_enabled(config.states[r])) enabled.push_back(r);
      if (enabled.empty()) break;
      int r = enabled[rng.below(enabled.size())];
      Event e = step_internal(config, setup, r, /*via_timeout=*/true);
      trial.events.push_back(e);
      apply_releases(rm.on_event(e));
      ++used;
      continue;
    }
    const Move& mv = moves[rng.below(moves.size())];
    switch (mv.kind) {
      case Move::Kind::monitor: {
        Event e = queue.front();
        queue.pop_front();
        apply_releases(rm.on_event(e));
        break;
      }
      case Move::Kind::receive: {
        Event e = step_receive(config, setup, mv.replica);
        trial.events.push_back(e);
        queue.push_back(e);
        break;
      }
      case Move::Kind::bottom: {
        Event e = step_internal(config, setup, mv.replica);
        trial.events.push_back(e);
        queue.push_back(e);
        break;
      }
    }
    ++used;
  }
  // drain the monitor queue so observation is not cut short
  while (!queue.empty()) {
    Event e = queue.front();
    queue.pop_front();
    apply_releases(rm.on_event(e));
  }

  trial.complete = is_complete(config, setup);
  trial.live_events = trial.events.size();

  // correspondence + prefix verdict against the target
  const History& target = rm.target();
  History live = History::build(trial.events);
  for (const Event& e : live.events()) {
    auto idx = target.find(key_of(e));
    if (!idx) {
      trial.failure = "live event with no target counterpart";
      return trial;
    }
    const Event& te = target.event(*idx);
    if (te.kind != e.kind) {
      trial.failure = "event kind mismatch at (" + std::to_string(e.replica.id) + "," +
                      std::to_string(e.seq) + ")";
      return trial;
    }
    if (e.is_message_event()) {
      MessageUid mapped = rm.target_uid_of(e.message->uid);
      if (mapped != te.message->uid || te.message->mtype != e.message->mtype) {
        trial.failure = "message mismatch at (" + std::to_string(e.replica.id) + "," +
                        std::to_string(e.seq) + ")";
        return trial;
      }
    }
  }
  trial.prefix = is_prefix(live, target);
  if (!trial.prefix) trial.failure = "happens-before not preserved";
  trial.equal = trial.prefix && live.size() == target.size();
  return trial;
}

struct ReplayVerdict {
  std::size_t trials = 0;
  std::size_t prefix_ok = 0;
  std::size_t equal_ok = 0;
  std::size_t complete = 0;
  std::string first_counterexample;  // history text of the first failing trial
};

inline ReplayVerdict check_replay(const ProtocolSetup& setup, const ReplayMonitor& rm,
                                  std::size_t trials, std::uint64_t base_seed,
                                  std::uint64_t budget = 20000) {
  ReplayVerdict v;
  v.trials = trials;
  for (std::size_t i = 0; i < trials; ++i) {
    ReplayTrial t = replay_run(setup, rm, base_seed + i, budget);
    if (t.prefix) ++v.prefix_ok;
    if (t.equal) ++v.equal_ok;
    if (t.complete) ++v.complete;
    if (!t.prefix && v.first_counterexample.empty()) {
      std::ostringstream out;
      out << "seed " << base_seed + i << ": " << t.failure << '\n';
      out << history_to_text(History::build(t.events));
      v.first_counterexample = out.str();
    }
  }
  return v;
}

}  // namespace conductor
