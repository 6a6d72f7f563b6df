#pragma once

#include <algorithm>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "conductor/automaton.hpp"
#include "conductor/types.hpp"

namespace conductor {

// Configuration C = (E, pool, states, messages) of the protocol transition
// system. The consumed set and uid counter are bookkeeping for uid
// conservation checks and replay.
struct ProtocolConfiguration {
  std::deque<Event> event_log;          // queue E, consumed by the monitor
  std::map<MessageUid, Message> pool;   // in-transit messages
  std::vector<StateBox> states;
  std::vector<std::deque<Message>> inboxes;
  std::set<MessageUid> consumed;
  MessageUid next_uid = 1;
  std::vector<std::uint64_t> next_seq;

  static ProtocolConfiguration initial(const ProtocolSetup& setup) {
    ProtocolConfiguration c;
    c.states.reserve(setup.size());
    for (int r = 0; r < setup.size(); ++r) c.states.push_back(setup.at(r).initial_state());
    c.inboxes.resize(setup.size());
    c.next_seq.assign(setup.size(), 0);
    return c;
  }
};

enum class Rule { internal_rule, send_rule, network_rule, receive_rule, adversary_rule };

inline const char* to_string(Rule r) {
  switch (r) {
    case Rule::internal_rule: return "internal";
    case Rule::send_rule: return "send";
    case Rule::network_rule: return "network";
    case Rule::receive_rule: return "receive";
    case Rule::adversary_rule: return "adversary";
  }
  return "?";
}

struct TraceStep {
  Rule rule;
  std::optional<Event> event;          // internal / send / receive rules
  std::optional<MessageUid> moved;     // network rule
  std::vector<Message> new_pool;       // adversary rule
  bool via_timeout = false;            // input was the logical-timeout marker
};

struct ExecutionTrace {
  int num_replicas = 0;
  std::vector<TraceStep> steps;
  bool complete = false;

  std::vector<Event> events() const {
    std::vector<Event> out;
    for (const auto& s : steps)
      if (s.event) out.push_back(*s.event);
    return out;
  }
};

// Internal or Send rule: feed the bottom (or timeout) marker to replica r.
// An internal emission leaves the event queue untouched; a send appends the
// event and adds the fresh message to the pool.
inline Event step_internal(ProtocolConfiguration& config, const ProtocolSetup& setup,
                           int r, bool via_timeout = false) {
  const ReplicaAutomaton& a = setup.at(r);
  if (a.is_final(config.states[r])) throw ReplicaFinal("replica " + std::to_string(r) + " is final");
  StepInput input = via_timeout ? StepInput{TimeoutInput{}} : StepInput{Bottom{}};
  auto out = a.step(config.states[r], input);
  if (!out) throw NoStepEnabled("no bottom step enabled at replica " + std::to_string(r));

  Event e;
  e.replica = a.id();
  e.seq = config.next_seq[r]++;
  if (out->send) {
    Message m;
    m.uid = config.next_uid++;
    m.from = a.id();
    m.to = out->send->to;
    m.mtype = out->send->mtype;
    m.payload = out->send->payload;
    e.kind = EventKind::send;
    e.message = m;
    config.pool.emplace(m.uid, m);
    config.event_log.push_back(e);
  } else {
    e.kind = EventKind::internal;
    e.note = out->note.value_or(InternalNote{"step", {}});
  }
  config.states[r] = out->next;
  return e;
}

// Network rule: move a pooled message to its destination inbox.
inline void step_network(ProtocolConfiguration& config, MessageUid uid) {
  auto it = config.pool.find(uid);
  if (it == config.pool.end()) throw NotInPool("message " + std::to_string(uid) + " not in pool");
  Message m = it->second;
  config.pool.erase(it);
  config.inboxes[m.to.id].push_back(std::move(m));
}

// Receive rule: consume the head of replica r's inbox.
inline Event step_receive(ProtocolConfiguration& config, const ProtocolSetup& setup, int r) {
  if (config.inboxes[r].empty()) throw EmptyInbox("inbox of replica " + std::to_string(r) + " empty");
  const ReplicaAutomaton& a = setup.at(r);
  if (a.is_final(config.states[r])) throw ReplicaFinal("replica " + std::to_string(r) + " is final");
  Message m = config.inboxes[r].front();
  auto out = a.step(config.states[r], StepInput{&m});
  if (!out) throw NoStepEnabled("head message not consumable at replica " + std::to_string(r));
  config.inboxes[r].pop_front();
  config.consumed.insert(m.uid);
  config.states[r] = out->next;

  Event e;
  e.replica = a.id();
  e.kind = EventKind::receive;
  e.seq = config.next_seq[r]++;
  e.message = m;
  config.event_log.push_back(e);
  return e;
}

// Adversary rule: replace the pool wholesale. Messages that were not in the
// old pool are marked fictitious; uids are assigned when missing.
inline void step_adversary(ProtocolConfiguration& config, std::vector<Message> new_pool) {
  std::map<MessageUid, Message> next;
  for (auto& m : new_pool) {
    if (m.uid == 0 || !config.pool.count(m.uid)) {
      if (m.uid == 0) m.uid = config.next_uid++;
      m.fictitious = true;
    }
    config.next_uid = std::max(config.next_uid, m.uid + 1);
    next.emplace(m.uid, std::move(m));
  }
  config.pool = std::move(next);
}

inline bool is_complete(const ProtocolConfiguration& config, const ProtocolSetup& setup) {
  for (int r = 0; r < setup.size(); ++r)
    if (!setup.at(r).is_final(config.states[r])) return false;
  return true;
}

namespace detail {

// Deliver every pooled message in (sender id, uid) order.
inline std::vector<MessageUid> pool_delivery_order(const ProtocolConfiguration& config) {
  std::vector<MessageUid> uids;
  uids.reserve(config.pool.size());
  for (const auto& [uid, m] : config.pool) uids.push_back(uid);
  std::sort(uids.begin(), uids.end(), [&](MessageUid a, MessageUid b) {
    const Message& ma = config.pool.at(a);
    const Message& mb = config.pool.at(b);
    if (ma.from.id != mb.from.id) return ma.from.id < mb.from.id;
    return a < b;
  });
  return uids;
}

}  // namespace detail

struct SynchronousRun {
  ExecutionTrace trace;
  ProtocolConfiguration final_config;
};

// Deterministic fault-free schedule: each replica exhausts bottom steps,
// the pool drains in (sender, uid) order, inboxes are consumed, and logical
// timeouts fire only at quiescence.
inline SynchronousRun run_synchronous(const ProtocolSetup& setup, std::uint64_t step_budget) {
  SynchronousRun run;
  run.trace.num_replicas = setup.size();
  ProtocolConfiguration config = ProtocolConfiguration::initial(setup);
  std::uint64_t used = 0;
  auto budget_left = [&] { return used < step_budget; };

  auto record_bottom = [&](int r, bool via_timeout) {
    Event e = step_internal(config, setup, r, via_timeout);
    TraceStep s;
    s.rule = e.kind == EventKind::send ? Rule::send_rule : Rule::internal_rule;
    s.event = e;
    s.via_timeout = via_timeout;
    run.trace.steps.push_back(std::move(s));
    ++used;
  };

  while (budget_left() && !is_complete(config, setup)) {
    bool progress = false;
    for (int r = 0; r < setup.size() && budget_left(); ++r) {
      while (budget_left() && setup.at(r).bottom_enabled(config.states[r])) {
        record_bottom(r, false);
        progress = true;
      }
    }
    if (!budget_left()) break;
    for (MessageUid uid : detail::pool_delivery_order(config)) {
      if (!budget_left()) break;
      step_network(config, uid);
      TraceStep s;
      s.rule = Rule::network_rule;
      s.moved = uid;
      run.trace.steps.push_back(std::move(s));
      ++used;
      progress = true;
    }
    for (int r = 0; r < setup.size() && budget_left(); ++r) {
      while (budget_left() && !config.inboxes[r].empty() &&
             !setup.at(r).is_final(config.states[r])) {
        if (setup.at(r).bottom_enabled(config.states[r])) {
          record_bottom(r, false);
          continue;
        }
        Event e = step_receive(config, setup, r);
        TraceStep s;
        s.rule = Rule::receive_rule;
        s.event = e;
        run.trace.steps.push_back(std::move(s));
        ++used;
        progress = true;
      }
    }
    if (progress || !budget_left()) continue;
    // quiescence: fire one logical timeout
    bool fired = false;
    for (int r = 0; r < setup.size(); ++r) {
      if (setup.at(r).timeout_enabled(config.states[r])) {
        record_bottom(r, true);
        fired = true;
        break;
      }
    }
    if (!fired) break;  // stuck
  }

  run.trace.complete = is_complete(config, setup);
  run.final_config = std::move(config);
  return run;
}

// ---------------------------------------------------------------------------
// Trace replay and checking

// Replays a trace from the initial configuration, verifying each step's rule
// premises along the way. Throws MalformedTrace on any mismatch.
inline ProtocolConfiguration replay_trace(const ProtocolSetup& setup, const ExecutionTrace& trace) {
  ProtocolConfiguration config = ProtocolConfiguration::initial(setup);
  for (std::size_t i = 0; i < trace.steps.size(); ++i) {
    const TraceStep& s = trace.steps[i];
    auto fail = [&](const std::string& why) {
      throw MalformedTrace("step " + std::to_string(i) + ": " + why);
    };
    switch (s.rule) {
      case Rule::internal_rule:
      case Rule::send_rule: {
        if (!s.event) fail("missing event");
        int r = s.event->replica.id;
        Event e = step_internal(config, setup, r, s.via_timeout);
        if (key_of(e) != key_of(*s.event) || e.kind != s.event->kind) fail("event mismatch");
        if (e.kind == EventKind::send && e.message->uid != s.event->message->uid)
          fail("send uid mismatch");
        break;
      }
      case Rule::network_rule:
        if (!s.moved) fail("missing uid");
        step_network(config, *s.moved);
        break;
      case Rule::receive_rule: {
        if (!s.event || !s.event->message) fail("missing event");
        int r = s.event->replica.id;
        if (config.inboxes[r].empty() || config.inboxes[r].front().uid != s.event->message->uid)
          fail("receive without provenance");
        Event e = step_receive(config, setup, r);
        if (key_of(e) != key_of(*s.event)) fail("event mismatch");
        break;
      }
      case Rule::adversary_rule:
        step_adversary(config, s.new_pool);
        break;
    }
  }
  return config;
}

// ---------------------------------------------------------------------------
// Trace serialization: one JSON record per transition.

inline nlohmann::json message_to_json(const Message& m) {
  return {{"uid", m.uid},
          {"from", m.from.id},
          {"to", m.to.id},
          {"type", m.mtype},
          {"payload", m.payload},
          {"fictitious", m.fictitious}};
}

inline Message message_from_json(const nlohmann::json& j) {
  Message m;
  m.uid = j.at("uid").get<MessageUid>();
  m.from.id = j.at("from").get<int>();
  m.to.id = j.at("to").get<int>();
  m.mtype = j.at("type").get<std::string>();
  m.payload = j.at("payload").get<FieldMap>();
  m.fictitious = j.at("fictitious").get<bool>();
  return m;
}

inline nlohmann::json event_to_json(const Event& e) {
  nlohmann::json j = {{"replica", e.replica.id}, {"kind", to_string(e.kind)}, {"seq", e.seq}};
  if (e.message) j["message"] = message_to_json(*e.message);
  if (e.note) j["note"] = {{"name", e.note->name}, {"params", e.note->params}};
  return j;
}

inline Event event_from_json(const nlohmann::json& j) {
  Event e;
  e.replica.id = j.at("replica").get<int>();
  std::string kind = j.at("kind").get<std::string>();
  e.kind = kind == "send" ? EventKind::send
                          : kind == "receive" ? EventKind::receive : EventKind::internal;
  e.seq = j.at("seq").get<std::uint64_t>();
  if (j.contains("message")) e.message = message_from_json(j.at("message"));
  if (j.contains("note"))
    e.note = InternalNote{j.at("note").at("name").get<std::string>(),
                          j.at("note").at("params").get<FieldMap>()};
  return e;
}

inline std::string trace_to_text(const ExecutionTrace& trace) {
  std::ostringstream out;
  out << nlohmann::json{{"record", "header"},
                        {"replicas", trace.num_replicas},
                        {"complete", trace.complete}}
             .dump()
      << '\n';
  for (std::size_t i = 0; i < trace.steps.size(); ++i) {
    const TraceStep& s = trace.steps[i];
    nlohmann::json j = {{"record", "step"}, {"index", i}, {"rule", to_string(s.rule)}};
    if (s.event) j["event"] = event_to_json(*s.event);
    if (s.moved) j["moved"] = *s.moved;
    if (s.rule == Rule::adversary_rule) {
      nlohmann::json pool = nlohmann::json::array();
      for (const auto& m : s.new_pool) pool.push_back(message_to_json(m));
      j["new_pool"] = pool;
    }
    if (s.via_timeout) j["timeout"] = true;
    out << j.dump() << '\n';
  }
  return out.str();
}

inline ExecutionTrace trace_from_text(const std::string& text) {
  ExecutionTrace trace;
  std::istringstream in(text);
  std::string line;
  bool saw_header = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    if (j.at("record") == "header") {
      trace.num_replicas = j.at("replicas").get<int>();
      trace.complete = j.at("complete").get<bool>();
      saw_header = true;
      continue;
    }
    TraceStep s;
    std::string rule = j.at("rule").get<std::string>();
    if (rule == "internal") s.rule = Rule::internal_rule;
    else if (rule == "send") s.rule = Rule::send_rule;
    else if (rule == "network") s.rule = Rule::network_rule;
    else if (rule == "receive") s.rule = Rule::receive_rule;
    else if (rule == "adversary") s.rule = Rule::adversary_rule;
    else throw MalformedTrace("unknown rule: " + rule);
    if (j.contains("event")) s.event = event_from_json(j.at("event"));
    if (j.contains("moved")) s.moved = j.at("moved").get<MessageUid>();
    if (j.contains("new_pool"))
      for (const auto& mj : j.at("new_pool")) s.new_pool.push_back(message_from_json(mj));
    s.via_timeout = j.value("timeout", false);
    trace.steps.push_back(std::move(s));
  }
  if (!saw_header) throw MalformedTrace("missing trace header");
  return trace;
}

}  // namespace conductor
