#pragma once

#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "conductor/dsl.hpp"
#include "conductor/types.hpp"

namespace conductor {

// Event-driven assertion state machine. Iteration success is judged by
// whether the current state is accepting when the step budget expires or
// the run completes. Fail is absorbing and never accepting.
class AssertionStateMachine {
 public:
  static constexpr const char* kInitial = "Initial";
  static constexpr const char* kFail = "Fail";

  AssertionStateMachine() : current_(kInitial) { states_.insert({kInitial, kFail}); }

  void add_transition(const std::string& from, Condition condition, const std::string& to) {
    if (from == kFail) throw ConfigError("Fail state has no outgoing transitions");
    states_.insert(from);
    states_.insert(to);
    transitions_[from].push_back({std::move(condition), to});
  }

  void mark_success(const std::string& label) {
    if (label == kFail) throw ConfigError("Fail state cannot be accepting");
    states_.insert(label);
    success_labels_.insert(label);
  }

  // Moves to the target of the first satisfied transition; stays otherwise.
  void step(const Event& e, const MonitorContext& ctx) {
    auto it = transitions_.find(current_);
    if (it == transitions_.end()) return;
    for (const auto& t : it->second) {
      if (t.condition(e, ctx)) {
        current_ = t.target;
        return;
      }
    }
  }

  bool is_accepting() const { return success_labels_.count(current_) > 0; }
  const std::string& current() const { return current_; }
  void reset() { current_ = kInitial; }

  const std::set<std::string>& states() const { return states_; }
  const std::set<std::string>& success_labels() const { return success_labels_; }

  std::string dump() const {
    std::ostringstream out;
    out << "states:";
    for (const auto& s : states_) out << ' ' << s;
    out << "\nsuccess:";
    for (const auto& s : success_labels_) out << ' ' << s;
    out << '\n';
    for (const auto& [from, ts] : transitions_)
      for (const auto& t : ts)
        out << from << " --[" << t.condition.name() << "]--> " << t.target << '\n';
    return out.str();
  }

 private:
  struct Transition {
    Condition condition;
    std::string target;
  };

  std::set<std::string> states_;
  std::set<std::string> success_labels_;
  std::map<std::string, std::vector<Transition>> transitions_;
  std::string current_;
};

// Builder handles in the style of on(state, condition, label).
class StateMachineBuilder {
 public:
  class StateHandle {
   public:
    StateHandle(AssertionStateMachine* sm, std::string label)
        : sm_(sm), label_(std::move(label)) {}

    // Adds a transition and returns a handle to the target state.
    StateHandle on(Condition condition, const std::string& target) {
      sm_->add_transition(label_, std::move(condition), target);
      return StateHandle(sm_, target);
    }

    StateHandle& mark_success() {
      sm_->mark_success(label_);
      return *this;
    }

    const std::string& label() const { return label_; }

   private:
    AssertionStateMachine* sm_;
    std::string label_;
  };

  explicit StateMachineBuilder(AssertionStateMachine& sm) : sm_(&sm) {}

  StateHandle initial() { return StateHandle(sm_, AssertionStateMachine::kInitial); }

 private:
  AssertionStateMachine* sm_;
};

}  // namespace conductor
