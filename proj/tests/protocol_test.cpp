#include <catch2/catch_amalgamated.hpp>

#include <deque>
#include <set>
#include <vector>

#include "conductor/core.hpp"
#include "conductor/history.hpp"
#include "conductor/protocols/pbft.hpp"
#include "conductor/protocols/raft.hpp"

using namespace conductor;

namespace {

struct EventCounts {
  int sends = 0;
  int recvs = 0;
  int internals = 0;
};

EventCounts count_events(const std::vector<Event>& events) {
  EventCounts c;
  for (const Event& e : events) {
    if (e.kind == EventKind::send) ++c.sends;
    else if (e.kind == EventKind::receive) ++c.recvs;
    else ++c.internals;
  }
  return c;
}

int notes_named(const std::vector<Event>& events, const std::string& name) {
  int n = 0;
  for (const Event& e : events)
    if (e.kind == EventKind::internal && e.note && e.note->name == name) ++n;
  return n;
}

// Bounded exploration of reachable replica states under arbitrary message
// inputs, to validate structural invariants of the automaton.
std::vector<StateBox> explore(const ReplicaAutomaton& a, std::vector<Message> candidates,
                              std::size_t cap) {
  std::vector<StateBox> visited;
  std::deque<StateBox> frontier;
  auto push = [&](const StateBox& s) {
    for (const auto& v : visited)
      if (v == s) return;
    visited.push_back(s);
    frontier.push_back(s);
  };
  push(a.initial_state());
  while (!frontier.empty() && visited.size() < cap) {
    StateBox s = frontier.front();
    frontier.pop_front();
    if (a.is_final(s)) continue;
    if (auto out = a.step(s, Bottom{})) push(out->next);
    if (auto out = a.step(s, TimeoutInput{})) push(out->next);
    for (const Message& m : candidates) {
      if (m.to.id != a.id().id) continue;
      if (auto out = a.step(s, StepInput{&m})) push(out->next);
    }
  }
  return visited;
}

std::vector<Message> pbft_candidate_messages(int n, int target) {
  std::vector<Message> out;
  MessageUid uid = 1;
  for (int from = 0; from < n; ++from) {
    if (from == target) continue;
    for (int view = 0; view <= 1; ++view)
      for (const char* mtype : {"PrePrepare", "Prepare", "Commit", "ViewChange", "NewView"}) {
        Message m;
        m.uid = uid++;
        m.from = {from, "r" + std::to_string(from)};
        m.to = {target, "r" + std::to_string(target)};
        m.mtype = mtype;
        m.payload = {{"view", std::to_string(view)}, {"request", "alpha"}, {"index", "0"}};
        out.push_back(std::move(m));
      }
  }
  return out;
}

}  // namespace

TEST_CASE("pbft fault-free run: golden event counts and unanimous decision") {
  auto setup = pbft::make_setup(4, 1);
  SynchronousRun run = run_synchronous(setup, 5000);
  REQUIRE(run.trace.complete);
  REQUIRE(run.trace.steps.size() == 82);
  auto c = count_events(run.trace.events());
  // leader: 3 PrePrepare; everyone: 3 Prepare + 3 Commit
  REQUIRE(c.sends == 27);
  REQUIRE(c.recvs == 23);
  REQUIRE(notes_named(run.trace.events(), "AddToLog") == 4);
  for (const Event& e : run.trace.events())
    if (e.note && e.note->name == "AddToLog") REQUIRE(e.note->param("request") == "alpha");
  // no view changes in the fault-free run
  for (const Event& e : run.trace.events())
    if (e.is_message_event()) REQUIRE(e.message->mtype != "ViewChange");
  // messages sent but unconsumed remain in transit
  std::size_t in_transit = run.final_config.pool.size();
  for (const auto& inbox : run.final_config.inboxes) in_transit += inbox.size();
  REQUIRE(in_transit == 27 - 23);
}

TEST_CASE("pbft quorum counting rejects mismatched votes") {
  pbft::PbftAutomaton a(1, 4, 1, "alpha");
  StateBox s = a.initial_state();
  auto feed = [&](const Message& m) {
    auto out = a.step(s, StepInput{&m});
    REQUIRE(out.has_value());
    s = out->next;
  };
  auto drain = [&] {
    while (a.bottom_enabled(s)) s = a.step(s, Bottom{})->next;
  };
  Message pp;
  pp.uid = 1;
  pp.from = {0, "r0"};
  pp.to = {1, "r1"};
  pp.mtype = "PrePrepare";
  pp.payload = {{"view", "0"}, {"request", "alpha"}, {"index", "0"}};
  feed(pp);
  drain();  // sends its Prepare
  auto prepare_from = [](int from, const std::string& request) {
    Message p;
    p.uid = 10 + from;
    p.from = {from, "r" + std::to_string(from)};
    p.to = {1, "r1"};
    p.mtype = "Prepare";
    p.payload = {{"view", "0"}, {"request", request}, {"index", "0"}};
    return p;
  };
  // a corrupted vote plus one honest vote: self + 1 matching < quorum 3
  feed(prepare_from(2, "beta"));
  feed(prepare_from(3, "alpha"));
  REQUIRE_FALSE(s.as<pbft::PbftState>().tallies.at(0).sent_commit);
  // third matching vote completes the quorum
  feed(prepare_from(0, "alpha"));
  REQUIRE(s.as<pbft::PbftState>().tallies.at(0).sent_commit);
}

TEST_CASE("pbft view changes are bounded: repeated timeouts terminate") {
  pbft::PbftAutomaton a(1, 4, 1, "alpha", 3);
  StateBox s = a.initial_state();
  int timeouts = 0;
  for (int i = 0; i < 20; ++i) {
    while (a.bottom_enabled(s)) s = a.step(s, Bottom{})->next;
    auto out = a.step(s, TimeoutInput{});
    if (!out) break;
    ++timeouts;
    s = out->next;
  }
  while (a.bottom_enabled(s)) s = a.step(s, Bottom{})->next;
  REQUIRE(timeouts == 3);  // view bound
  REQUIRE(a.is_final(s));
  REQUIRE_FALSE(a.timeout_enabled(s));
}

TEST_CASE("pbft emission exclusivity over reachable states") {
  // a state with pending emissions never consumes messages or timeouts, and
  // every step emits at most one of {send, note}
  auto candidates = pbft_candidate_messages(4, 2);
  pbft::PbftAutomaton a(2, 4, 1, "alpha", 1);
  auto states = explore(a, candidates, 3000);
  REQUIRE(states.size() > 50);
  int pending_states = 0;
  for (const StateBox& s : states) {
    bool bottom = a.bottom_enabled(s);
    if (auto out = a.step(s, Bottom{}))
      REQUIRE(out->send.has_value() != out->note.has_value());
    if (!bottom) continue;
    ++pending_states;
    REQUIRE_FALSE(a.timeout_enabled(s));
    for (const Message& m : candidates)
      if (m.to.id == 2) REQUIRE_FALSE(a.step(s, StepInput{&m}).has_value());
  }
  REQUIRE(pending_states > 0);
}

TEST_CASE("pbft leader needs 2f other view-change votes before NewView") {
  // replica 1 is leader of view 1
  pbft::PbftAutomaton a(1, 4, 1, "alpha");
  StateBox s = a.initial_state();
  auto vc = [&](int from) {
    Message m;
    m.uid = 30 + from;
    m.from = {from, "r" + std::to_string(from)};
    m.to = {1, "r1"};
    m.mtype = "ViewChange";
    m.payload = {{"view", "1"}};
    return m;
  };
  Message m0 = vc(0);
  s = a.step(s, StepInput{&m0})->next;
  REQUIRE(s.as<pbft::PbftState>().newview_sent.empty());
  Message m2 = vc(2);
  s = a.step(s, StepInput{&m2})->next;
  REQUIRE(s.as<pbft::PbftState>().newview_sent.count(1) == 1);
  REQUIRE(s.as<pbft::PbftState>().view == 1);
  // the new-view leader re-proposes
  bool saw_preprepare = false;
  for (const auto& d : s.as<pbft::PbftState>().outbox)
    if (d.mtype == "PrePrepare" && d.payload.at("view") == "1") saw_preprepare = true;
  REQUIRE(saw_preprepare);
}

TEST_CASE("pbft rejects n < 3f+1") {
  REQUIRE_THROWS_AS(pbft::PbftAutomaton(0, 3, 1, "alpha"), ConfigError);
  REQUIRE_NOTHROW(pbft::PbftAutomaton(0, 4, 1, "alpha"));
}

TEST_CASE("raft fault-free run: election then replication, golden counts") {
  auto setup = raft::make_setup(5);
  SynchronousRun run = run_synchronous(setup, 5000);
  REQUIRE(run.trace.complete);
  auto events = run.trace.events();
  auto c = count_events(events);
  // 4 RequestVote + 4 replies + 4 AppendEntries + 4 replies + 4 CommitNotify
  REQUIRE(c.sends == 20);
  REQUIRE(notes_named(events, "ElectionStarted") == 1);
  REQUIRE(notes_named(events, "LeaderElected") == 1);
  REQUIRE(notes_named(events, "EntryCommitted") == 5);
  for (const Event& e : events)
    if (e.note && e.note->name == "LeaderElected") {
      REQUIRE(e.replica.id == 0);
      REQUIRE(e.note->param("term") == "1");
    }
}

TEST_CASE("raft vote accounting: one grant per term, majority required") {
  raft::RaftAutomaton a(1, 5);
  StateBox s = a.initial_state();
  auto rv = [&](int from, int term) {
    Message m;
    m.uid = 40 + from;
    m.from = {from, "r" + std::to_string(from)};
    m.to = {1, "r1"};
    m.mtype = "RequestVote";
    m.payload = {{"term", std::to_string(term)}};
    return m;
  };
  Message a0 = rv(0, 1);
  s = a.step(s, StepInput{&a0})->next;
  REQUIRE(s.as<raft::RaftState>().outbox.back().payload.at("granted") == "1");
  while (a.bottom_enabled(s)) s = a.step(s, Bottom{})->next;
  Message a2 = rv(2, 1);  // competing candidate, same term
  s = a.step(s, StepInput{&a2})->next;
  REQUIRE(s.as<raft::RaftState>().outbox.back().payload.at("granted") == "0");

  // a candidate with only 2 of 5 votes is not leader
  raft::RaftAutomaton cand(0, 5);
  StateBox cs = cand.initial_state();
  cs = cand.step(cs, TimeoutInput{})->next;
  while (cand.bottom_enabled(cs)) cs = cand.step(cs, Bottom{})->next;
  Message reply;
  reply.uid = 50;
  reply.from = {1, "r1"};
  reply.to = {0, "r0"};
  reply.mtype = "RequestVoteReply";
  reply.payload = {{"term", "1"}, {"granted", "1"}};
  cs = cand.step(cs, StepInput{&reply})->next;
  REQUIRE(cs.as<raft::RaftState>().role == raft::Role::candidate);
  Message reply2 = reply;
  reply2.uid = 51;
  reply2.from = {2, "r2"};
  cs = cand.step(cs, StepInput{&reply2})->next;
  REQUIRE(cs.as<raft::RaftState>().role == raft::Role::leader);
}

TEST_CASE("raft term bound terminates repeated elections") {
  raft::RaftAutomaton a(0, 5, {0}, "x1", 2);
  StateBox s = a.initial_state();
  int campaigns = 0;
  for (int i = 0; i < 10; ++i) {
    while (a.bottom_enabled(s)) s = a.step(s, Bottom{})->next;
    auto out = a.step(s, TimeoutInput{});
    if (!out) break;
    ++campaigns;
    s = out->next;
  }
  REQUIRE(campaigns == 2);
  // terms exhausted: replica can no longer campaign
  while (a.bottom_enabled(s)) s = a.step(s, Bottom{})->next;
  REQUIRE_FALSE(a.timeout_enabled(s));
}

TEST_CASE("raft followers never start elections") {
  raft::RaftAutomaton a(3, 5, {0});
  StateBox s = a.initial_state();
  REQUIRE_FALSE(a.timeout_enabled(s));
  REQUIRE_FALSE(a.step(s, TimeoutInput{}).has_value());
}

TEST_CASE("raft rejects even or tiny n") {
  REQUIRE_THROWS_AS(raft::RaftAutomaton(0, 4), ConfigError);
  REQUIRE_THROWS_AS(raft::RaftAutomaton(0, 1), ConfigError);
}
