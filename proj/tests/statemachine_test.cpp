#include <catch2/catch_amalgamated.hpp>

#include "conductor/statemachine.hpp"

using namespace conductor;

namespace {

Event note_event(int replica, const std::string& name) {
  Event e;
  e.replica = {replica, "r" + std::to_string(replica)};
  e.kind = EventKind::internal;
  e.note = InternalNote{name, {}};
  return e;
}

Condition on_note(const std::string& name) {
  return Condition("OnNote(" + name + ")", [name](const Event& e, const MonitorContext&) {
    return e.kind == EventKind::internal && e.note && e.note->name == name;
  });
}

}  // namespace

TEST_CASE("starts in Initial, stays on unmatched events") {
  AssertionStateMachine sm;
  sm.add_transition(AssertionStateMachine::kInitial, on_note("go"), "Done");
  MonitorContext ctx;
  REQUIRE(sm.current() == "Initial");
  sm.step(note_event(0, "other"), ctx);
  REQUIRE(sm.current() == "Initial");
  sm.step(note_event(0, "go"), ctx);
  REQUIRE(sm.current() == "Done");
}

TEST_CASE("first satisfied transition wins") {
  AssertionStateMachine sm;
  sm.add_transition(AssertionStateMachine::kInitial, on_note("x"), "A");
  sm.add_transition(AssertionStateMachine::kInitial, on_note("x"), "B");
  MonitorContext ctx;
  sm.step(note_event(0, "x"), ctx);
  REQUIRE(sm.current() == "A");
}

TEST_CASE("Fail is absorbing and never accepting") {
  AssertionStateMachine sm;
  sm.add_transition(AssertionStateMachine::kInitial, on_note("bad"), AssertionStateMachine::kFail);
  sm.mark_success(AssertionStateMachine::kInitial);
  MonitorContext ctx;
  REQUIRE(sm.is_accepting());
  sm.step(note_event(0, "bad"), ctx);
  REQUIRE(sm.current() == "Fail");
  REQUIRE_FALSE(sm.is_accepting());
  sm.step(note_event(0, "bad"), ctx);
  REQUIRE(sm.current() == "Fail");
  REQUIRE_THROWS_AS(sm.add_transition(AssertionStateMachine::kFail, on_note("x"), "A"),
                    ConfigError);
  REQUIRE_THROWS_AS(sm.mark_success(AssertionStateMachine::kFail), ConfigError);
}

TEST_CASE("acceptance reflects the marked labels") {
  AssertionStateMachine sm;
  sm.add_transition(AssertionStateMachine::kInitial, on_note("a"), "Mid");
  sm.add_transition("Mid", on_note("b"), "End");
  sm.mark_success("End");
  MonitorContext ctx;
  REQUIRE_FALSE(sm.is_accepting());
  sm.step(note_event(0, "a"), ctx);
  REQUIRE_FALSE(sm.is_accepting());
  sm.step(note_event(0, "b"), ctx);
  REQUIRE(sm.is_accepting());
  sm.reset();
  REQUIRE(sm.current() == "Initial");
  REQUIRE_FALSE(sm.is_accepting());
}

TEST_CASE("conditions read the monitor context") {
  AssertionStateMachine sm;
  sm.add_transition(AssertionStateMachine::kInitial, count("hits").gte(2), "Enough");
  sm.mark_success("Enough");
  MonitorContext ctx;
  sm.step(note_event(0, "x"), ctx);
  REQUIRE(sm.current() == "Initial");
  ctx.counters["hits"] = 2;
  sm.step(note_event(0, "x"), ctx);
  REQUIRE(sm.current() == "Enough");
}

TEST_CASE("builder chains transitions through handles") {
  AssertionStateMachine sm;
  StateMachineBuilder b(sm);
  b.initial().on(on_note("first"), "Mid").on(on_note("second"), "End").mark_success();
  REQUIRE(sm.states().count("Mid") == 1);
  REQUIRE(sm.success_labels() == std::set<std::string>{"End"});
  MonitorContext ctx;
  sm.step(note_event(0, "first"), ctx);
  sm.step(note_event(0, "second"), ctx);
  REQUIRE(sm.is_accepting());
  REQUIRE(sm.dump().find("Mid") != std::string::npos);
}
