#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <functional>
#include <map>
#include <set>
#include <vector>

#include "conductor/pctcp.hpp"
#include "conductor/rng.hpp"

using namespace conductor;

namespace {

// Random DAG on uids 1..n: edge i -> j (i < j) with ~30% probability; the
// predecessor set passed at registration is the full ancestor set.
struct RandomPoset {
  int n;
  std::vector<std::set<MessageUid>> ancestors;  // 1-based
};

RandomPoset make_poset(int n, std::uint64_t seed) {
  RandomPoset p{n, std::vector<std::set<MessageUid>>(n + 1)};
  SplitRng rng(seed, 7);
  for (int j = 2; j <= n; ++j)
    for (int i = 1; i < j; ++i)
      if (rng.below(10) < 3) {
        p.ancestors[j].insert(i);
        p.ancestors[j].insert(p.ancestors[i].begin(), p.ancestors[i].end());
      }
  return p;
}

// Dilworth: minimum chain cover of a poset equals the maximum matching
// complement in the split bipartite graph. Kuhn's algorithm.
int min_chain_cover(const RandomPoset& p) {
  int n = p.n;
  std::vector<std::vector<int>> adj(n + 1);
  for (int j = 1; j <= n; ++j)
    for (MessageUid i : p.ancestors[j]) adj[static_cast<int>(i)].push_back(j);
  std::vector<int> match(n + 1, 0);
  std::vector<bool> seen;
  std::function<bool(int)> try_kuhn = [&](int u) -> bool {
    for (int v : adj[u]) {
      if (seen[v]) continue;
      seen[v] = true;
      if (match[v] == 0 || try_kuhn(match[v])) {
        match[v] = u;
        return true;
      }
    }
    return false;
  };
  int matched = 0;
  for (int u = 1; u <= n; ++u) {
    seen.assign(n + 1, false);
    if (try_kuhn(u)) ++matched;
  }
  return n - matched;
}

}  // namespace

TEST_CASE("constructor validates depth and bound") {
  REQUIRE_THROWS_AS(ChainPartitionSchedule(1, 100, 0), InvalidDepth);
  REQUIRE_THROWS_AS(ChainPartitionSchedule(1, 2, 5), InvalidDepth);
  ChainPartitionSchedule s(1, 100, 4);
  REQUIRE(s.change_points().size() == 3);
  for (auto p : s.change_points()) {
    REQUIRE(p >= 1);
    REQUIRE(p <= 100);
  }
  // sorted and distinct by construction
  auto cp = s.change_points();
  REQUIRE(std::is_sorted(cp.begin(), cp.end()));
  REQUIRE(std::set<std::uint64_t>(cp.begin(), cp.end()).size() == cp.size());
}

TEST_CASE("registration extends a chain only via its tail") {
  ChainPartitionSchedule s(3, 100, 1);
  s.register_message(1, {});
  s.register_message(2, {1});      // chain [1,2]
  s.register_message(3, {1});      // 1 is no longer the tail: new chain
  REQUIRE(s.width_estimate() == 2);
  s.register_message(4, {2, 3});   // extends whichever chain's tail is in {2,3}
  REQUIRE(s.width_estimate() == 2);
  REQUIRE_THROWS_AS(s.register_message(4, {}), DuplicateMessage);
  REQUIRE_THROWS_AS(s.register_message(9, {8}), UnknownPredecessor);
}

TEST_CASE("chain count never beats the true width lower bound and priorities are distinct") {
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    RandomPoset p = make_poset(24, seed);
    ChainPartitionSchedule s(seed, 1000, 5);
    for (int uid = 1; uid <= p.n; ++uid)
      s.register_message(uid, p.ancestors[uid]);
    // a chain cover can never use fewer chains than the Dilworth optimum
    REQUIRE(static_cast<int>(s.width_estimate()) >= min_chain_cover(p));
    std::set<std::uint64_t> prios;
    for (int uid = 1; uid <= p.n; ++uid) prios.insert(s.chain_priority(uid));
    REQUIRE(prios.size() == s.width_estimate());
    for (auto pr : prios) REQUIRE(pr >= 5);  // reserved band is 1..d-1
  }
}

TEST_CASE("delivery follows chain priority and respects chain order") {
  ChainPartitionSchedule s(11, 100, 1);
  s.register_message(1, {});
  s.register_message(2, {1});
  s.register_message(3, {});
  s.register_message(4, {3});
  std::set<MessageUid> enabled{1, 2, 3, 4};
  std::vector<MessageUid> seq;
  while (auto uid = s.next_delivery(enabled)) {
    seq.push_back(*uid);
    s.notify_delivered(*uid);
    enabled.erase(*uid);
  }
  REQUIRE(seq.size() == 4);
  // chain order within each chain
  auto pos = [&](MessageUid u) { return std::find(seq.begin(), seq.end(), u) - seq.begin(); };
  REQUIRE(pos(1) < pos(2));
  REQUIRE(pos(3) < pos(4));
  // with d=1 there are no change points, so the higher-priority chain drains
  // completely first
  bool one_first = s.chain_priority(1) > s.chain_priority(3);
  if (one_first) REQUIRE((pos(1) == 0 && pos(2) == 1));
  else REQUIRE((pos(3) == 0 && pos(4) == 1));
}

TEST_CASE("a blocked chain head hides the rest of its chain") {
  ChainPartitionSchedule s(11, 100, 1);
  s.register_message(1, {});
  s.register_message(2, {1});
  auto uid = s.next_delivery({2});  // head 1 not enabled
  REQUIRE_FALSE(uid.has_value());
  uid = s.next_delivery({1, 2});
  REQUIRE(uid == 1);
}

TEST_CASE("notify must match the scheduled delivery") {
  ChainPartitionSchedule s(5, 100, 1);
  s.register_message(1, {});
  s.register_message(2, {});
  REQUIRE_THROWS_AS(s.notify_delivered(1), OutOfOrderNotification);
  auto uid = s.next_delivery({1, 2});
  REQUIRE(uid.has_value());
  MessageUid other = *uid == 1 ? 2 : 1;
  REQUIRE_THROWS_AS(s.notify_delivered(other), OutOfOrderNotification);
  s.notify_delivered(*uid);
  REQUIRE(s.delivered_count() == 1);
}

TEST_CASE("change point demotes the active chain into the reserved band") {
  // find a seed whose single change point is at delivery 1 so the demotion
  // is observable immediately
  for (std::uint64_t seed = 1; seed < 200; ++seed) {
    ChainPartitionSchedule s(seed, 4, 2);
    if (s.change_points() != std::vector<std::uint64_t>{1}) continue;
    s.register_message(1, {});
    s.register_message(2, {1});
    s.register_message(3, {});
    auto first = s.next_delivery({1, 3});
    REQUIRE(first.has_value());
    s.notify_delivered(*first);
    REQUIRE(s.chain_priority(*first) == 1);  // reserved priority k+1 = 1
    // the demoted chain now loses to the other one
    MessageUid expected_next = *first == 1 ? 3 : 1;
    auto second = s.next_delivery({2, 3, 1});
    REQUIRE(second == expected_next);
    return;
  }
  FAIL("no seed with change point at 1 found");
}

TEST_CASE("same seed reproduces the same schedule") {
  auto run = [](std::uint64_t seed) {
    RandomPoset p = make_poset(16, 99);
    ChainPartitionSchedule s(seed, 200, 4);
    for (int uid = 1; uid <= p.n; ++uid) s.register_message(uid, p.ancestors[uid]);
    std::set<MessageUid> enabled;
    for (int uid = 1; uid <= p.n; ++uid) enabled.insert(uid);
    std::vector<MessageUid> seq;
    while (auto uid = s.next_delivery(enabled)) {
      seq.push_back(*uid);
      s.notify_delivered(*uid);
      enabled.erase(*uid);
    }
    return std::make_pair(seq, s.dump());
  };
  auto [seq_a, dump_a] = run(42);
  auto [seq_b, dump_b] = run(42);
  auto [seq_c, dump_c] = run(43);
  REQUIRE(seq_a == seq_b);
  REQUIRE(dump_a == dump_b);
  REQUIRE(seq_a.size() == 16);
  REQUIRE((seq_a != seq_c || dump_a != dump_c));
}

TEST_CASE("full delivery is always possible when everything is enabled") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    RandomPoset p = make_poset(20, seed * 31);
    ChainPartitionSchedule s(seed, 100, 3);
    for (int uid = 1; uid <= p.n; ++uid) s.register_message(uid, p.ancestors[uid]);
    std::set<MessageUid> enabled;
    for (int uid = 1; uid <= p.n; ++uid) enabled.insert(uid);
    int count = 0;
    while (auto uid = s.next_delivery(enabled)) {
      s.notify_delivered(*uid);
      enabled.erase(*uid);
      ++count;
    }
    REQUIRE(count == p.n);
    REQUIRE(s.delivery_sequence().size() == 20);
  }
}

TEST_CASE("rng streams are independent and below is in range") {
  SplitRng a(123, 0), b(123, 1), a2(123, 0);
  bool diverged = false;
  for (int i = 0; i < 16; ++i) {
    auto va = a.next();
    REQUIRE(va == a2.next());
    if (va != b.next()) diverged = true;
  }
  REQUIRE(diverged);
  SplitRng r(9, 2);
  for (int i = 0; i < 1000; ++i) REQUIRE(r.below(7) < 7);
}
