#pragma once

#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "conductor/core.hpp"
#include "conductor/dsl.hpp"
#include "conductor/history.hpp"
#include "conductor/pctcp.hpp"
#include "conductor/statemachine.hpp"

namespace conductor {

// The executable unit test: filters plus an assertion state machine, with a
// logical step budget standing in for the iteration timeout.
struct TestCase {
  std::string name;
  std::uint64_t step_budget = 5000;
  std::function<void(MonitorContext&)> setup;  // optional context seeding
  FilterSet filters;
  AssertionStateMachine assertion;
};

struct DriverOptions {
  int depth = 10;                // PCTCP d
  std::uint64_t n_bound = 1000;  // PCTCP n (max events per execution)
};

enum class Outcome { success, fail, errored };

inline const char* to_string(Outcome o) {
  switch (o) {
    case Outcome::success: return "success";
    case Outcome::fail: return "fail";
    case Outcome::errored: return "errored";
  }
  return "?";
}

// Where replica steps actually execute. The driver owns the pool, inboxes,
// blocked set and monitor; a backend only steps replicas and reports their
// enablement, so in-process automata and out-of-process replicas share the
// same product loop.
class ExecutionBackend {
 public:
  virtual ~ExecutionBackend() = default;

  virtual int num_replicas() const = 0;
  virtual void reset() = 0;  // fresh iteration
  virtual bool is_final(int r) = 0;
  virtual bool bottom_enabled(int r) = 0;
  virtual bool timeout_enabled(int r) = 0;

  // Internal/Send rule. Send events carry a message with a backend-assigned
  // uid; the driver adds it to the pool.
  virtual Event step_bottom(int r, bool via_timeout) = 0;

  // Receive rule for an inbox head the driver hands over.
  virtual Event step_receive(int r, const Message& m) = 0;
};

class InProcessBackend : public ExecutionBackend {
 public:
  explicit InProcessBackend(ProtocolSetup setup) : setup_(std::move(setup)) { reset(); }

  int num_replicas() const override { return setup_.size(); }

  void reset() override {
    states_.clear();
    for (int r = 0; r < setup_.size(); ++r) states_.push_back(setup_.at(r).initial_state());
    next_seq_.assign(setup_.size(), 0);
    next_uid_ = 1;
  }

  bool is_final(int r) override { return setup_.at(r).is_final(states_[r]); }
  bool bottom_enabled(int r) override { return setup_.at(r).bottom_enabled(states_[r]); }
  bool timeout_enabled(int r) override { return setup_.at(r).timeout_enabled(states_[r]); }

  Event step_bottom(int r, bool via_timeout) override {
    const ReplicaAutomaton& a = setup_.at(r);
    if (a.is_final(states_[r])) throw ReplicaFinal("replica " + std::to_string(r) + " is final");
    StepInput input = via_timeout ? StepInput{TimeoutInput{}} : StepInput{Bottom{}};
    auto out = a.step(states_[r], input);
    if (!out) throw NoStepEnabled("no bottom step enabled at replica " + std::to_string(r));
    Event e;
    e.replica = a.id();
    e.seq = next_seq_[r]++;
    if (out->send) {
      Message m;
      m.uid = next_uid_++;
      m.from = a.id();
      m.to = out->send->to;
      m.mtype = out->send->mtype;
      m.payload = out->send->payload;
      e.kind = EventKind::send;
      e.message = std::move(m);
    } else {
      e.kind = EventKind::internal;
      e.note = out->note.value_or(InternalNote{"step", {}});
    }
    states_[r] = out->next;
    return e;
  }

  Event step_receive(int r, const Message& m) override {
    const ReplicaAutomaton& a = setup_.at(r);
    auto out = a.step(states_[r], StepInput{&m});
    if (!out) throw NoStepEnabled("message not consumable at replica " + std::to_string(r));
    states_[r] = out->next;
    Event e;
    e.replica = a.id();
    e.kind = EventKind::receive;
    e.seq = next_seq_[r]++;
    e.message = m;
    return e;
  }

  const ProtocolSetup& setup() const { return setup_; }

 private:
  ProtocolSetup setup_;
  std::vector<StateBox> states_;
  std::vector<std::uint64_t> next_seq_;
  MessageUid next_uid_ = 1;
};

// Product-step audit record, used by tests to check the product rules.
struct AuditEntry {
  enum class Kind { monitor, monitor_deliver, network_nb, receive, bottom, timeout };
  Kind kind;
  MessageUid uid = 0;  // delivered/received message where applicable
  int replica = -1;
  bool was_blocked = false;
};

struct IterationOutcome {
  Outcome outcome = Outcome::fail;
  std::string final_sm_label;
  std::uint64_t seed = 0;
  std::size_t event_count = 0;
  std::size_t delivered_count = 0;
  std::uint64_t steps_used = 0;
  bool complete = false;
  std::string schedule_dump;
  std::string error;
  std::vector<Event> events;  // everything the monitor consumed
  std::vector<AuditEntry> audit;
};

namespace detail {

// Tracks which messages are causally before each new send, for chain
// registration.
struct CausalTracker {
  std::map<int, std::set<MessageUid>> known;        // per replica
  std::map<MessageUid, std::set<MessageUid>> past;  // per message

  void on_send(const Message& m) {
    past[m.uid] = known[m.from.id];
    known[m.from.id].insert(m.uid);
  }
  void on_receive(const Message& m) {
    auto it = past.find(m.uid);
    if (it != past.end()) known[m.to.id].insert(it->second.begin(), it->second.end());
    known[m.to.id].insert(m.uid);
  }
};

}  // namespace detail

// One iteration of the product transition system: monitor steps drain the
// event queue; the residual choice of moves follows the fixed priority
// receives > scheduler deliveries > bottom steps > quiescence timeouts.
inline IterationOutcome run_iteration(const TestCase& tc, ExecutionBackend& backend,
                                      std::uint64_t seed, const DriverOptions& opts = {}) {
  IterationOutcome out;
  out.seed = seed;
  backend.reset();
  const int n = backend.num_replicas();
  std::map<MessageUid, Message> pool;
  std::vector<std::deque<Message>> inboxes(n);
  std::deque<Event> queue;  // monitor event queue (all emitted events)
  std::set<MessageUid> blocked;
  MessageUid next_fictitious = 1ull << 32;  // disjoint from backend send uids
  MonitorContext ctx;
  AssertionStateMachine sm = tc.assertion;
  sm.reset();
  ctx.sm_state = sm.current();
  if (tc.setup) tc.setup(ctx);
  ChainPartitionSchedule sched(seed, opts.n_bound, opts.depth);
  detail::CausalTracker causal;
  int timeout_cursor = 0;

  auto deliver_to_inbox = [&](Message m) {
    blocked.erase(m.uid);
    pool.erase(m.uid);
    inboxes[m.to.id].push_back(std::move(m));
  };
  auto all_final = [&] {
    for (int r = 0; r < n; ++r)
      if (!backend.is_final(r)) return false;
    return true;
  };

  try {
    while (out.steps_used < tc.step_budget) {
      if (!queue.empty()) {
        Event e = queue.front();
        queue.pop_front();
        if (e.is_message_event()) {
          ctx.pool_view.emplace(e.message->uid, *e.message);
          if (e.kind == EventKind::send) causal.on_send(*e.message);
          else causal.on_receive(*e.message);
        }
        FilterOutcome fo = apply_filters(tc.filters, e, ctx);
        sm.step(e, ctx);
        ctx.sm_state = sm.current();
        ctx.event_history.push_back(e);
        out.events.push_back(e);
        out.audit.push_back({AuditEntry::Kind::monitor, 0, e.replica.id, false});

        for (Message& m : fo.deliveries) {
          if (m.uid == 0 || (m.fictitious && !pool.count(m.uid))) {
            // fictitious injection, folded Adversary+Network step
            m.uid = next_fictitious++;
            m.fictitious = true;
            ctx.pool_view.emplace(m.uid, m);
          } else if (!pool.count(m.uid) && !blocked.count(m.uid)) {
            continue;  // already delivered earlier
          }
          out.audit.push_back({AuditEntry::Kind::monitor_deliver, m.uid, m.to.id, false});
          ++out.delivered_count;
          deliver_to_inbox(std::move(m));
        }
        if (e.kind == EventKind::send) {
          MessageUid uid = e.message->uid;
          if (fo.matched && fo.blocked) {
            blocked.insert(uid);
          } else if (pool.count(uid)) {
            // available for delivery: hand over to the chain scheduler
            std::set<MessageUid> preds;
            for (MessageUid p : causal.past[uid])
              if (sched.is_registered(p)) preds.insert(p);
            sched.register_message(uid, preds);
          }
        }
        ++out.steps_used;
        continue;
      }

      if (all_final()) break;

      // Receive: lowest-id replica with a consumable inbox head
      int recv_r = -1;
      for (int r = 0; r < n; ++r) {
        if (inboxes[r].empty()) continue;
        if (backend.is_final(r)) continue;
        if (backend.bottom_enabled(r)) continue;
        recv_r = r;
        break;
      }
      if (recv_r >= 0) {
        Message m = inboxes[recv_r].front();
        inboxes[recv_r].pop_front();
        Event e = backend.step_receive(recv_r, m);
        out.audit.push_back({AuditEntry::Kind::receive, m.uid, recv_r, false});
        queue.push_back(e);
        ++out.steps_used;
        continue;
      }

      // Network-NB via PCTCP over pool minus blocked
      std::set<MessageUid> enabled;
      for (const auto& [uid, m] : pool)
        if (!blocked.count(uid) && sched.is_registered(uid)) enabled.insert(uid);
      if (auto uid = sched.next_delivery(enabled)) {
        Message m = pool.at(*uid);
        out.audit.push_back({AuditEntry::Kind::network_nb, *uid, m.to.id, blocked.count(*uid) > 0});
        pool.erase(*uid);
        inboxes[m.to.id].push_back(std::move(m));
        sched.notify_delivered(*uid);
        ++out.delivered_count;
        ++out.steps_used;
        continue;
      }

      // Bottom steps
      int bot_r = -1;
      for (int r = 0; r < n; ++r) {
        if (!backend.is_final(r) && backend.bottom_enabled(r)) {
          bot_r = r;
          break;
        }
      }
      if (bot_r >= 0) {
        Event e = backend.step_bottom(bot_r, false);
        if (e.kind == EventKind::send) pool.emplace(e.message->uid, *e.message);
        out.audit.push_back({AuditEntry::Kind::bottom, 0, bot_r, false});
        queue.push_back(e);
        ++out.steps_used;
        continue;
      }

      // Quiescence: fire one logical timeout, rotating over replicas
      int fired = -1;
      for (int i = 0; i < n; ++i) {
        int r = (timeout_cursor + i) % n;
        if (!backend.is_final(r) && backend.timeout_enabled(r)) {
          fired = r;
          break;
        }
      }
      if (fired < 0) break;  // stuck
      timeout_cursor = (fired + 1) % n;
      Event e = backend.step_bottom(fired, true);
      if (e.kind == EventKind::send) pool.emplace(e.message->uid, *e.message);
      out.audit.push_back({AuditEntry::Kind::timeout, 0, fired, false});
      queue.push_back(e);
      ++out.steps_used;
    }
    out.outcome = sm.is_accepting() ? Outcome::success : Outcome::fail;
    out.complete = all_final();
  } catch (const std::exception& ex) {
    out.outcome = Outcome::errored;
    out.error = ex.what();
  }

  out.final_sm_label = sm.current();
  out.event_count = out.events.size();
  out.schedule_dump = sched.dump();
  return out;
}

inline IterationOutcome run_iteration(const TestCase& tc, const ProtocolSetup& setup,
                                      std::uint64_t seed, const DriverOptions& opts = {}) {
  InProcessBackend backend(setup);
  return run_iteration(tc, backend, seed, opts);
}

struct SuiteReport {
  std::string testcase;
  std::uint64_t base_seed = 0;
  std::vector<IterationOutcome> iterations;
  std::size_t successes = 0;
  std::size_t failures = 0;
  std::size_t errors = 0;

  std::string summary() const {
    return std::to_string(successes) + "/" + std::to_string(iterations.size());
  }
};

// Seeds base_seed..base_seed+iterations-1 with a full reset in between.
inline SuiteReport run_suite(const TestCase& tc, ExecutionBackend& backend,
                             std::size_t iterations, std::uint64_t base_seed,
                             const DriverOptions& opts = {}) {
  if (iterations < 1) throw ConfigError("iterations must be >= 1");
  SuiteReport report;
  report.testcase = tc.name;
  report.base_seed = base_seed;
  for (std::size_t i = 0; i < iterations; ++i) {
    IterationOutcome o = run_iteration(tc, backend, base_seed + i, opts);
    switch (o.outcome) {
      case Outcome::success: ++report.successes; break;
      case Outcome::fail: ++report.failures; break;
      case Outcome::errored: ++report.errors; break;
    }
    report.iterations.push_back(std::move(o));
  }
  return report;
}

inline SuiteReport run_suite(const TestCase& tc, const ProtocolSetup& setup,
                             std::size_t iterations, std::uint64_t base_seed,
                             const DriverOptions& opts = {}) {
  InProcessBackend backend(setup);
  return run_suite(tc, backend, iterations, base_seed, opts);
}

// Report file format: one header line (the only line with a timestamp), one
// row per iteration, and a trailing summary.
inline std::string report_to_text(const SuiteReport& r, const std::string& timestamp = "") {
  std::ostringstream out;
  out << "# testcase " << r.testcase << " base_seed " << r.base_seed;
  if (!timestamp.empty()) out << " generated " << timestamp;
  out << '\n';
  for (const auto& it : r.iterations) {
    out << "iteration seed=" << it.seed << " outcome=" << to_string(it.outcome)
        << " sm=" << it.final_sm_label << " events=" << it.event_count
        << " delivered=" << it.delivered_count << " steps=" << it.steps_used
        << " complete=" << (it.complete ? 1 : 0) << '\n';
  }
  out << "summary " << r.summary() << '\n';
  return out.str();
}

// ---------------------------------------------------------------------------
// Filter distance (capture/release pairing against a fault-free run)

struct DistanceEntry {
  std::string filter;
  std::string kind;              // capture-release | drop | byzantine | unknown
  std::optional<long> distance;  // empty means infinite or unknown
  bool end_release = false;      // release never fired; measured to end of run
};

// Distance between a capture filter's first match and its release trigger,
// counted in message sends of a fault-free synchronous execution.
inline std::vector<DistanceEntry> compute_filter_distances(const FilterSet& fs,
                                                           const ProtocolSetup& setup,
                                                           std::uint64_t budget = 20000) {
  SynchronousRun normal = run_synchronous(setup, budget);
  std::vector<Event> events = normal.trace.events();

  // first send index at which the condition fires, replaying context
  auto first_match = [&](const Condition& c, long from_send_idx) -> std::optional<long> {
    MonitorContext ctx;
    long send_idx = -1;
    for (const Event& e : events) {
      if (e.kind == EventKind::send) ++send_idx;
      if (e.is_message_event()) ctx.pool_view.emplace(e.message->uid, *e.message);
      if (send_idx >= from_send_idx && e.kind == EventKind::send && c(e, ctx)) return send_idx;
      ctx.event_history.push_back(e);
    }
    return std::nullopt;
  };

  long total_sends = 0;
  for (const Event& e : events)
    if (e.kind == EventKind::send) ++total_sends;

  std::vector<DistanceEntry> out;
  std::map<std::string, std::pair<const Filter*, const Filter*>> pairs;  // set -> (capture, release)
  for (const Filter& f : fs) {
    bool classified = false;
    for (const Action& a : f.actions) {
      if (a.kind() == ActionKind::byzantine) {
        out.push_back({f.condition.name(), "byzantine", std::nullopt, false});
        classified = true;
      } else if (a.kind() == ActionKind::drop) {
        auto cap = first_match(f.condition, 0);
        if (!cap) throw NoMatchInNormalRun("drop condition never fires: " + f.condition.name());
        out.push_back({f.condition.name(), "drop", total_sends - *cap, false});
        classified = true;
      } else if (a.kind() == ActionKind::store) {
        pairs[a.set_name()].first = &f;
        classified = true;
      } else if (a.kind() == ActionKind::deliver_all) {
        pairs[a.set_name()].second = &f;
        classified = true;
      }
      if (classified) break;
    }
    if (!classified) out.push_back({f.condition.name(), "unknown", std::nullopt, false});
  }
  for (const auto& [set_name, pair] : pairs) {
    const Filter* cap = pair.first;
    const Filter* rel = pair.second;
    if (!cap) continue;
    auto ci = first_match(cap->condition, 0);
    if (!ci) throw NoMatchInNormalRun("capture condition never fires: " + cap->condition.name());
    DistanceEntry entry;
    entry.filter =
        cap->condition.name() + (rel ? " / " + rel->condition.name() : std::string(" / <none>"));
    entry.kind = "capture-release";
    std::optional<long> ri = rel ? first_match(rel->condition, *ci + 1) : std::nullopt;
    if (ri) {
      entry.distance = *ri - *ci;
    } else {
      entry.distance = total_sends - *ci;  // released only at end of execution
      entry.end_release = true;
    }
    out.push_back(std::move(entry));
  }
  return out;
}

inline std::string distances_to_text(const std::vector<DistanceEntry>& entries) {
  std::ostringstream out;
  for (const auto& d : entries) {
    out << d.kind << '\t' << d.filter << '\t';
    if (d.distance) out << *d.distance << (d.end_release ? " (end of run)" : "");
    else out << (d.kind == "byzantine" ? "inf" : "?");
    out << '\n';
  }
  return out.str();
}

}  // namespace conductor
