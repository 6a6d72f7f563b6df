#pragma once

#include <any>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "conductor/types.hpp"

namespace conductor {

// Type-erased replica state with value semantics and equality.
class StateBox {
 public:
  StateBox() = default;

  template <class T>
  explicit StateBox(T value)
      : value_(std::move(value)),
        eq_([](const std::any& a, const std::any& b) {
          return std::any_cast<const T&>(a) == std::any_cast<const T&>(b);
        }) {}

  template <class T>
  const T& as() const {
    return std::any_cast<const T&>(value_);
  }

  bool has_value() const { return value_.has_value(); }

  friend bool operator==(const StateBox& a, const StateBox& b) {
    if (!a.value_.has_value() || !b.value_.has_value())
      return a.value_.has_value() == b.value_.has_value();
    if (a.value_.type() != b.value_.type()) return false;
    return a.eq_(a.value_, b.value_);
  }
  friend bool operator!=(const StateBox& a, const StateBox& b) {
    return !(a == b);
  }

 private:
  std::any value_;
  std::function<bool(const std::any&, const std::any&)> eq_;
};

// Content of a message a replica wants to send; the configuration assigns
// the uid when the Send rule fires.
struct MessageDraft {
  ReplicaId to;
  std::string mtype;
  FieldMap payload;

  friend bool operator==(const MessageDraft&, const MessageDraft&) = default;
};

// Inputs to the replica transition function. Bottom is the plain internal
// marker. Timeout is a distinguished internal marker the driver feeds only
// at quiescence (logical timers).
struct Bottom {};
struct TimeoutInput {};
using StepInput = std::variant<Bottom, TimeoutInput, const Message*>;

// One transition: the successor state plus exactly one emission.
struct StepOutput {
  StateBox next;
  std::optional<MessageDraft> send;   // set for send steps
  std::optional<InternalNote> note;   // set for internal steps
};

// Deterministic partial transition system of one replica.
class ReplicaAutomaton {
 public:
  virtual ~ReplicaAutomaton() = default;

  virtual ReplicaId id() const = 0;
  virtual StateBox initial_state() const = 0;
  virtual bool is_final(const StateBox& s) const = 0;

  // Returns nullopt when no transition is defined from s on the input.
  virtual std::optional<StepOutput> step(const StateBox& s,
                                         const StepInput& input) const = 0;

  bool bottom_enabled(const StateBox& s) const {
    return !is_final(s) && step(s, Bottom{}).has_value();
  }
  bool timeout_enabled(const StateBox& s) const {
    return !is_final(s) && step(s, TimeoutInput{}).has_value();
  }
};

using AutomatonPtr = std::shared_ptr<const ReplicaAutomaton>;

// A protocol instance: one automaton per replica. Client requests are part
// of the initial replica states, so a fault-free history has no receives
// without matching sends.
struct ProtocolSetup {
  std::vector<AutomatonPtr> automata;

  int size() const { return static_cast<int>(automata.size()); }
  const ReplicaAutomaton& at(int r) const { return *automata.at(r); }
};

}  // namespace conductor
