#pragma once

#include <cctype>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "conductor/types.hpp"

namespace conductor {

// Monitor state s: a key-value store of counters and message sets, plus
// read views of everything the monitor has observed so far.
struct MonitorContext {
  std::map<std::string, long long> counters;
  std::map<std::string, std::vector<Message>> message_sets;  // insertion order, uid-unique
  std::map<MessageUid, Message> pool_view;                   // all observed messages
  std::vector<Event> event_history;
  std::string sm_state = "Initial";

  long long counter(const std::string& name) const {
    auto it = counters.find(name);
    return it == counters.end() ? 0 : it->second;  // default 0 on first read
  }

  const std::vector<Message>& message_set(const std::string& name) const {
    static const std::vector<Message> empty;
    auto it = message_sets.find(name);
    return it == message_sets.end() ? empty : it->second;
  }

  void add_to_set(const std::string& name, const Message& m) {
    auto& set = message_sets[name];
    for (const auto& existing : set)
      if (existing.uid == m.uid) return;
    set.push_back(m);
  }

  std::vector<Message> take_set(const std::string& name) {
    std::vector<Message> out;
    auto it = message_sets.find(name);
    if (it != message_sets.end()) out.swap(it->second);
    return out;
  }
};

// Event type tag used by IsEventType: message events map to MessageSend /
// MessageReceive, internal events to their note name.
inline std::string event_type(const Event& e) {
  switch (e.kind) {
    case EventKind::send: return "MessageSend";
    case EventKind::receive: return "MessageReceive";
    case EventKind::internal: return e.note ? e.note->name : "internal";
  }
  return "internal";
}

// Pure predicate over (event, context).
class Condition {
 public:
  using Fn = std::function<bool(const Event&, const MonitorContext&)>;

  Condition() : name_("False"), fn_([](const Event&, const MonitorContext&) { return false; }) {}
  Condition(std::string name, Fn fn) : name_(std::move(name)), fn_(std::move(fn)) {}

  bool operator()(const Event& e, const MonitorContext& ctx) const { return fn_(e, ctx); }
  const std::string& name() const { return name_; }

  Condition And(Condition other) const {
    auto a = *this;
    auto b = std::move(other);
    return Condition(a.name_ + ".And(" + b.name_ + ")",
                     [a, b](const Event& e, const MonitorContext& c) { return a(e, c) && b(e, c); });
  }
  Condition Or(Condition other) const {
    auto a = *this;
    auto b = std::move(other);
    return Condition(a.name_ + ".Or(" + b.name_ + ")",
                     [a, b](const Event& e, const MonitorContext& c) { return a(e, c) || b(e, c); });
  }
  Condition Not() const {
    auto a = *this;
    return Condition(a.name_ + ".Not()",
                     [a](const Event& e, const MonitorContext& c) { return !a(e, c); });
  }

 private:
  std::string name_;
  Fn fn_;
};

inline Condition is_event_type(const std::string& t) {
  return Condition("IsEventType(" + t + ")",
                   [t](const Event& e, const MonitorContext&) { return event_type(e) == t; });
}

inline Condition is_message_type(const std::string& t) {
  return Condition("IsMessageType(" + t + ")", [t](const Event& e, const MonitorContext&) {
    return e.is_message_event() && e.message->mtype == t;
  });
}

inline Condition is_message_send() {
  return Condition("IsMessageSend", [](const Event& e, const MonitorContext&) {
    return e.kind == EventKind::send;
  });
}

inline Condition is_message_receive() {
  return Condition("IsMessageReceive", [](const Event& e, const MonitorContext&) {
    return e.kind == EventKind::receive;
  });
}

inline Condition is_message_from(int r) {
  return Condition("IsMessageFrom(" + std::to_string(r) + ")",
                   [r](const Event& e, const MonitorContext&) {
                     return e.is_message_event() && e.message->from.id == r;
                   });
}

inline Condition is_message_to(int r) {
  return Condition("IsMessageTo(" + std::to_string(r) + ")",
                   [r](const Event& e, const MonitorContext&) {
                     return e.is_message_event() && e.message->to.id == r;
                   });
}

// Count(c).Lt(v) et al.
struct CountRef {
  std::string name;

  Condition lt(long long v) const {
    auto n = name;
    return Condition("Count(" + n + ").Lt(" + std::to_string(v) + ")",
                     [n, v](const Event&, const MonitorContext& c) { return c.counter(n) < v; });
  }
  Condition gt(long long v) const {
    auto n = name;
    return Condition("Count(" + n + ").Gt(" + std::to_string(v) + ")",
                     [n, v](const Event&, const MonitorContext& c) { return c.counter(n) > v; });
  }
  Condition leq(long long v) const {
    auto n = name;
    return Condition("Count(" + n + ").Leq(" + std::to_string(v) + ")",
                     [n, v](const Event&, const MonitorContext& c) { return c.counter(n) <= v; });
  }
  Condition gte(long long v) const {
    auto n = name;
    return Condition("Count(" + n + ").Gte(" + std::to_string(v) + ")",
                     [n, v](const Event&, const MonitorContext& c) { return c.counter(n) >= v; });
  }
};

inline CountRef count(const std::string& name) { return CountRef{name}; }

inline Condition message_set_contains(const std::string& s) {
  return Condition("MessageSet(" + s + ").Contains", [s](const Event& e, const MonitorContext& c) {
    if (!e.is_message_event()) return false;
    for (const auto& m : c.message_set(s))
      if (m.uid == e.message->uid) return true;
    return false;
  });
}

// ---------------------------------------------------------------------------
// Actions

enum class ActionKind { deliver, drop, store, deliver_all, incr, custom, byzantine };

struct ActionResult {
  std::vector<Message> deliver;
  std::optional<bool> block;  // override of the blocked flag for this event
};

class Action {
 public:
  using Fn = std::function<ActionResult(const Event&, MonitorContext&)>;

  Action(std::string name, ActionKind kind, Fn fn, std::string set_name = "")
      : name_(std::move(name)), kind_(kind), fn_(std::move(fn)), set_name_(std::move(set_name)) {}

  ActionResult operator()(const Event& e, MonitorContext& ctx) const { return fn_(e, ctx); }
  const std::string& name() const { return name_; }
  ActionKind kind() const { return kind_; }
  const std::string& set_name() const { return set_name_; }

 private:
  std::string name_;
  ActionKind kind_;
  Fn fn_;
  std::string set_name_;
};

inline Action deliver_message() {
  return Action("DeliverMessage", ActionKind::deliver, [](const Event& e, MonitorContext&) {
    ActionResult r;
    if (e.kind == EventKind::send) {
      r.deliver.push_back(*e.message);
      r.block = false;
    }
    // receive events: Table 2 covers sends only; deliver nothing
    return r;
  });
}

inline Action drop_message() {
  return Action("DropMessage", ActionKind::drop, [](const Event&, MonitorContext&) {
    ActionResult r;
    r.block = true;
    return r;
  });
}

inline Action count_incr(const std::string& c) {
  return Action("Count(" + c + ").Incr", ActionKind::incr, [c](const Event&, MonitorContext& ctx) {
    ctx.counters[c] = ctx.counter(c) + 1;
    return ActionResult{};
  });
}

inline Action message_set_store(const std::string& s) {
  return Action("MessageSet(" + s + ").Store", ActionKind::store,
                [s](const Event& e, MonitorContext& ctx) {
                  ActionResult r;
                  if (e.is_message_event()) {
                    ctx.add_to_set(s, *e.message);
                    r.block = true;
                  }
                  return r;
                },
                s);
}

inline Action message_set_deliver_all(const std::string& s) {
  return Action("MessageSet(" + s + ").DeliverAll", ActionKind::deliver_all,
                [s](const Event&, MonitorContext& ctx) {
                  ActionResult r;
                  r.deliver = ctx.take_set(s);
                  return r;
                },
                s);
}

// ---------------------------------------------------------------------------
// Filters

struct Filter {
  Condition condition;
  std::vector<Action> actions;
};

inline Filter If_Then(Condition c, std::vector<Action> actions) {
  return Filter{std::move(c), std::move(actions)};
}

using FilterSet = std::vector<Filter>;

struct FilterOutcome {
  bool matched = false;
  std::vector<Message> deliveries;
  bool blocked = false;
};

// First-match dispatch: at most one filter's actions run per event. Actions
// execute left to right; deliveries are unioned and the last block override
// wins.
inline FilterOutcome apply_filters(const FilterSet& fs, const Event& e, MonitorContext& ctx) {
  FilterOutcome out;
  for (const Filter& f : fs) {
    if (!f.condition(e, ctx)) continue;
    out.matched = true;
    for (const Action& a : f.actions) {
      ActionResult r;
      try {
        r = a(e, ctx);
      } catch (const std::exception& ex) {
        throw ActionFailure(std::string("action ") + a.name() + " failed: " + ex.what());
      }
      for (auto& m : r.deliver) out.deliveries.push_back(std::move(m));
      if (r.block) out.blocked = *r.block;
    }
    break;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Name registry and declarative text form

// Registry of named condition/action constructors so test cases and the CLI
// smoke-test format can reference protocol-specific primitives by name.
class DslRegistry {
 public:
  using ConditionFactory = std::function<Condition(const std::vector<std::string>&)>;
  using ActionFactory = std::function<Action(const std::vector<std::string>&)>;

  DslRegistry() { register_builtins(); }

  void add_condition(const std::string& name, ConditionFactory f) { conditions_[name] = std::move(f); }
  void add_action(const std::string& name, ActionFactory f) { actions_[name] = std::move(f); }

  Condition make_condition(const std::string& name, const std::vector<std::string>& args) const {
    auto it = conditions_.find(name);
    if (it == conditions_.end()) throw ConfigError("unknown condition: " + name);
    return it->second(args);
  }
  Action make_action(const std::string& name, const std::vector<std::string>& args) const {
    auto it = actions_.find(name);
    if (it == actions_.end()) throw ConfigError("unknown action: " + name);
    return it->second(args);
  }

 private:
  static long long to_int(const std::string& s) { return std::stoll(s); }

  void register_builtins() {
    add_condition("IsEventType", [](const auto& a) { return is_event_type(a.at(0)); });
    add_condition("IsMessageType", [](const auto& a) { return is_message_type(a.at(0)); });
    add_condition("IsMessageSend", [](const auto&) { return is_message_send(); });
    add_condition("IsMessageReceive", [](const auto&) { return is_message_receive(); });
    add_condition("IsMessageFrom", [](const auto& a) { return is_message_from((int)to_int(a.at(0))); });
    add_condition("IsMessageTo", [](const auto& a) { return is_message_to((int)to_int(a.at(0))); });
    add_condition("CountLt", [](const auto& a) { return count(a.at(0)).lt(to_int(a.at(1))); });
    add_condition("CountGt", [](const auto& a) { return count(a.at(0)).gt(to_int(a.at(1))); });
    add_condition("CountLeq", [](const auto& a) { return count(a.at(0)).leq(to_int(a.at(1))); });
    add_condition("CountGte", [](const auto& a) { return count(a.at(0)).gte(to_int(a.at(1))); });
    add_condition("MessageSetContains", [](const auto& a) { return message_set_contains(a.at(0)); });
    add_action("DeliverMessage", [](const auto&) { return deliver_message(); });
    add_action("DropMessage", [](const auto&) { return drop_message(); });
    add_action("CountIncr", [](const auto& a) { return count_incr(a.at(0)); });
    add_action("StoreInSet", [](const auto& a) { return message_set_store(a.at(0)); });
    add_action("DeliverAllFromSet", [](const auto& a) { return message_set_deliver_all(a.at(0)); });
  }

  std::map<std::string, ConditionFactory> conditions_;
  std::map<std::string, ActionFactory> actions_;
};

namespace detail {

struct DslLexer {
  std::string text;
  std::size_t pos = 0;

  void skip_ws() {
    while (pos < text.size() && std::isspace((unsigned char)text[pos])) ++pos;
  }
  bool eof() {
    skip_ws();
    return pos >= text.size();
  }
  bool peek_word(const std::string& w) {
    skip_ws();
    if (text.compare(pos, w.size(), w) != 0) return false;
    std::size_t end = pos + w.size();
    return end >= text.size() || !std::isalnum((unsigned char)text[end]);
  }
  bool eat_word(const std::string& w) {
    if (!peek_word(w)) return false;
    pos += w.size();
    return true;
  }
  bool eat_char(char c) {
    skip_ws();
    if (pos < text.size() && text[pos] == c) {
      ++pos;
      return true;
    }
    return false;
  }
  std::string ident() {
    skip_ws();
    std::size_t start = pos;
    while (pos < text.size() && (std::isalnum((unsigned char)text[pos]) || text[pos] == '_' ||
                                 text[pos] == '-' || text[pos] == '.'))
      ++pos;
    if (start == pos) throw ConfigError("expected identifier at: " + text.substr(pos));
    return text.substr(start, pos - start);
  }
  std::vector<std::string> args() {
    std::vector<std::string> out;
    if (!eat_char('(')) return out;
    if (eat_char(')')) return out;
    do {
      out.push_back(ident());
    } while (eat_char(','));
    if (!eat_char(')')) throw ConfigError("expected ) in filter text");
    return out;
  }
};

inline Condition parse_condition_expr(DslLexer& lx, const DslRegistry& reg);

inline Condition parse_condition_atom(DslLexer& lx, const DslRegistry& reg) {
  if (lx.eat_word("not")) return parse_condition_atom(lx, reg).Not();
  if (lx.eat_char('(')) {
    Condition c = parse_condition_expr(lx, reg);
    if (!lx.eat_char(')')) throw ConfigError("expected ) in filter text");
    return c;
  }
  std::string name = lx.ident();
  return reg.make_condition(name, lx.args());
}

inline Condition parse_condition_expr(DslLexer& lx, const DslRegistry& reg) {
  Condition c = parse_condition_atom(lx, reg);
  for (;;) {
    if (lx.eat_word("and")) c = c.And(parse_condition_atom(lx, reg));
    else if (lx.eat_word("or")) c = c.Or(parse_condition_atom(lx, reg));
    else return c;
  }
}

}  // namespace detail

// Declarative one-line form: `if <cond> then <action>[, <action>...]` with
// conditions combined by and/or/not, e.g.
//   if IsMessageType(Prepare) and IsMessageTo(2) then DropMessage()
inline Filter parse_filter(const std::string& text, const DslRegistry& reg) {
  detail::DslLexer lx{text};
  if (!lx.eat_word("if")) throw ConfigError("filter text must start with 'if'");
  Condition c = detail::parse_condition_expr(lx, reg);
  if (!lx.eat_word("then")) throw ConfigError("expected 'then' in filter text");
  std::vector<Action> actions;
  do {
    std::string name = lx.ident();
    actions.push_back(reg.make_action(name, lx.args()));
  } while (lx.eat_char(','));
  if (!lx.eof()) throw ConfigError("trailing input in filter text");
  return Filter{std::move(c), std::move(actions)};
}

}  // namespace conductor
