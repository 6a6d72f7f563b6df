#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "conductor/driver.hpp"
#include "conductor/protocols/pbft.hpp"
#include "conductor/protocols/raft.hpp"

namespace conductor {

// A shipped, named test case: the scenario plus its protocol defaults and
// the success threshold (percent of iterations) the CLI enforces.
struct RegisteredCase {
  std::string name;
  std::string protocol;  // pbft | raft
  int default_n = 0;
  int default_f = 0;
  int threshold_pct = 100;
  std::string description;
  std::function<TestCase()> make;
  std::function<ProtocolSetup(int n, int f)> make_setup;
};

namespace testcases {

inline Condition sent(const std::string& mtype) { return is_message_send().And(is_message_type(mtype)); }

// Fig.-2-style agreement machine: Fail iff two decisions for the same index
// disagree. Initial is accepting so fault-free runs succeed.
inline void attach_agreement(AssertionStateMachine& sm, const std::vector<std::string>& states) {
  for (const auto& s : states)
    sm.add_transition(s, pbft::conflicting_decisions(), AssertionStateMachine::kFail);
}

inline TestCase pbft_agreement() {
  TestCase tc;
  tc.name = "agreement";
  attach_agreement(tc.assertion, {AssertionStateMachine::kInitial});
  tc.assertion.mark_success(AssertionStateMachine::kInitial);
  return tc;
}

// Example 1: drop Prepare messages of view 0 to one replica p. Expected:
// exactly one ViewChange(1) sender, and no NewView (1 < 2f+1 requesters).
inline TestCase pbft_drop_prepare_one() {
  TestCase tc;
  tc.name = "drop-prepare-one";
  const int p = 2;
  tc.filters.push_back(If_Then(
      sent("Prepare").And(pbft::message_view(0)).And(is_message_to(p)), {drop_message()}));
  auto& sm = tc.assertion;
  sm.add_transition(AssertionStateMachine::kInitial,
                    pbft::distinct_senders_gte("ViewChange", 1, 2), AssertionStateMachine::kFail);
  sm.add_transition(AssertionStateMachine::kInitial, sent("NewView"),
                    AssertionStateMachine::kFail);
  sm.add_transition(AssertionStateMachine::kInitial,
                    sent("ViewChange").And(pbft::message_view(1)).And(is_message_from(p)),
                    "OneViewChange");
  sm.add_transition("OneViewChange", pbft::distinct_senders_gte("ViewChange", 1, 2),
                    AssertionStateMachine::kFail);
  sm.add_transition("OneViewChange", sent("NewView"), AssertionStateMachine::kFail);
  attach_agreement(sm, {AssertionStateMachine::kInitial, "OneViewChange"});
  sm.mark_success("OneViewChange");
  return tc;
}

// Example 2: drop Prepare messages of view 0 to replicas p, q, r. Expected:
// the leader of view 1 collects 2f+1 view-change requests and sends NewView.
inline TestCase pbft_drop_prepare_three() {
  TestCase tc;
  tc.name = "drop-prepare-three";
  Condition to_pqr = is_message_to(1).Or(is_message_to(2)).Or(is_message_to(3));
  tc.filters.push_back(
      If_Then(sent("Prepare").And(pbft::message_view(0)).And(to_pqr), {drop_message()}));
  auto& sm = tc.assertion;
  sm.add_transition(AssertionStateMachine::kInitial,
                    sent("NewView").And(pbft::message_view(1)), "NewView");
  attach_agreement(sm, {AssertionStateMachine::kInitial, "NewView"});
  sm.mark_success("NewView");
  return tc;
}

// Baseline contrast: with no filters, does any schedule deliver all twelve
// view-0 Prepare messages only after view 1 has begun? (Expected: none.)
inline TestCase pbft_prepares_after_viewchange() {
  TestCase tc;
  tc.name = "prepares-after-viewchange";
  auto& sm = tc.assertion;
  sm.add_transition(AssertionStateMachine::kInitial,
                    is_message_receive().And(is_message_type("Prepare")).And(pbft::message_view(0)),
                    "PrepareFirst");
  sm.add_transition(AssertionStateMachine::kInitial,
                    sent("ViewChange").And(pbft::message_view(1)), "View1First");
  sm.add_transition("View1First", pbft::receives_gte("Prepare", 0, 12), "AllPreparesLate");
  attach_agreement(sm, {AssertionStateMachine::kInitial, "PrepareFirst", "View1First",
                        "AllPreparesLate"});
  sm.mark_success("AllPreparesLate");
  return tc;
}

// Byzantine analog: every Prepare sent by replica 3 is replaced with a nil
// request. 2f+1 honest matching votes remain, so all replicas still decide.
inline TestCase pbft_change_prepare_nil() {
  TestCase tc;
  tc.name = "change-prepare-nil";
  tc.filters.push_back(
      If_Then(sent("Prepare").And(is_message_from(3)), {pbft::change_prepare_to_nil()}));
  auto& sm = tc.assertion;
  sm.add_transition(AssertionStateMachine::kInitial, pbft::decisions_gte(4), "AllDecided");
  attach_agreement(sm, {AssertionStateMachine::kInitial, "AllDecided"});
  sm.mark_success("AllDecided");
  return tc;
}

// Round-skip analog: hold view-0 PrePrepare to replica 3 until a view-1
// PrePrepare appears (in a fault-free run that never happens, so the hold
// lasts to the end of the execution). The other replicas decide without 3.
inline TestCase pbft_reorder_preprepare() {
  TestCase tc;
  tc.name = "reorder-preprepare";
  tc.filters.push_back(
      If_Then(sent("PrePrepare").And(pbft::message_view(0)).And(is_message_to(3)),
              {message_set_store("held-preprepare")}));
  tc.filters.push_back(If_Then(sent("PrePrepare").And(pbft::message_view(1)),
                               {deliver_message(), message_set_deliver_all("held-preprepare")}));
  auto& sm = tc.assertion;
  sm.add_transition(AssertionStateMachine::kInitial, pbft::decisions_gte(3), "QuorumDecided");
  attach_agreement(sm, {AssertionStateMachine::kInitial, "QuorumDecided"});
  sm.mark_success("QuorumDecided");
  return tc;
}

inline void attach_election_safety(AssertionStateMachine& sm,
                                   const std::vector<std::string>& states) {
  for (const auto& s : states)
    sm.add_transition(s, raft::election_safety_violated(), AssertionStateMachine::kFail);
}

inline TestCase raft_fault_free() {
  TestCase tc;
  tc.name = "raft-election";
  auto& sm = tc.assertion;
  sm.add_transition(AssertionStateMachine::kInitial, raft::leader_elected(), "Elected");
  attach_election_safety(sm, {AssertionStateMachine::kInitial, "Elected"});
  sm.mark_success("Elected");
  return tc;
}

// DropFVotes analog: drop f=2 of the RequestVoteReply messages; the
// candidate still wins with 3 votes including its own.
inline TestCase raft_drop_f_votes() {
  TestCase tc;
  tc.name = "drop-f-votes";
  Condition from_12 = is_message_from(1).Or(is_message_from(2));
  tc.filters.push_back(
      If_Then(sent("RequestVoteReply").And(from_12).And(is_message_to(0)), {drop_message()}));
  auto& sm = tc.assertion;
  sm.add_transition(AssertionStateMachine::kInitial, raft::leader_elected(), "Elected");
  attach_election_safety(sm, {AssertionStateMachine::kInitial, "Elected"});
  sm.mark_success("Elected");
  return tc;
}

// ReVote analog: drop every term-1 vote reply; the candidate must retry and
// win the election in term 2.
inline TestCase raft_drop_all_votes() {
  TestCase tc;
  tc.name = "drop-all-votes";
  tc.filters.push_back(
      If_Then(sent("RequestVoteReply").And(raft::message_term(1)), {drop_message()}));
  auto& sm = tc.assertion;
  sm.add_transition(AssertionStateMachine::kInitial, raft::leader_elected(2), "ReElected");
  attach_election_safety(sm, {AssertionStateMachine::kInitial, "ReElected"});
  sm.mark_success("ReElected");
  return tc;
}

// ReVote-style reorder pair: hold the vote replies from replicas 1 and 2
// until the leader's first AppendEntries, then release them late.
inline TestCase raft_revote_reorder() {
  TestCase tc;
  tc.name = "revote-reorder";
  Condition from_12 = is_message_from(1).Or(is_message_from(2));
  tc.filters.push_back(
      If_Then(sent("RequestVoteReply").And(from_12), {message_set_store("late-votes")}));
  tc.filters.push_back(If_Then(sent("AppendEntries"),
                               {deliver_message(), message_set_deliver_all("late-votes")}));
  auto& sm = tc.assertion;
  sm.add_transition(AssertionStateMachine::kInitial, raft::leader_elected(), "Elected");
  attach_election_safety(sm, {AssertionStateMachine::kInitial, "Elected"});
  sm.mark_success("Elected");
  return tc;
}

}  // namespace testcases

inline const std::vector<RegisteredCase>& testcase_registry() {
  static const std::vector<RegisteredCase> registry = [] {
    auto pbft_setup = [](int n, int f) { return pbft::make_setup(n, f); };
    auto raft_setup = [](int n, int) { return raft::make_setup(n); };
    std::vector<RegisteredCase> r;
    r.push_back({"agreement", "pbft", 4, 1, 100,
                 "fault-free run; all replicas must agree", testcases::pbft_agreement, pbft_setup});
    r.push_back({"drop-prepare-one", "pbft", 4, 1, 100,
                 "drop view-0 Prepare to one replica; expect a lone view change",
                 testcases::pbft_drop_prepare_one, pbft_setup});
    r.push_back({"drop-prepare-three", "pbft", 4, 1, 100,
                 "drop view-0 Prepare to three replicas; expect NewView(1)",
                 testcases::pbft_drop_prepare_three, pbft_setup});
    r.push_back({"prepares-after-viewchange", "pbft", 4, 1, 0,
                 "baseline: can pure schedule randomization defer all view-0 Prepares past view 1",
                 testcases::pbft_prepares_after_viewchange, pbft_setup});
    r.push_back({"change-prepare-nil", "pbft", 4, 1, 100,
                 "corrupt one replica's Prepare votes to nil; agreement must survive",
                 testcases::pbft_change_prepare_nil, pbft_setup});
    r.push_back({"reorder-preprepare", "pbft", 4, 1, 100,
                 "hold PrePrepare to one replica; the remaining quorum decides",
                 testcases::pbft_reorder_preprepare, pbft_setup});
    r.push_back({"raft-election", "raft", 5, 2, 100, "fault-free leader election",
                 testcases::raft_fault_free, raft_setup});
    r.push_back({"drop-f-votes", "raft", 5, 2, 95,
                 "drop f vote replies; the candidate still reaches a majority",
                 testcases::raft_drop_f_votes, raft_setup});
    r.push_back({"drop-all-votes", "raft", 5, 2, 100,
                 "drop every term-1 vote reply; election must retry in term 2",
                 testcases::raft_drop_all_votes, raft_setup});
    r.push_back({"revote-reorder", "raft", 5, 2, 100,
                 "delay two vote replies until after AppendEntries",
                 testcases::raft_revote_reorder, raft_setup});
    return r;
  }();
  return registry;
}

inline const RegisteredCase* find_testcase(const std::string& name) {
  for (const auto& c : testcase_registry())
    if (c.name == name) return &c;
  return nullptr;
}

}  // namespace conductor
