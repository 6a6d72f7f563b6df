#include <catch2/catch_amalgamated.hpp>

#include <memory>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>

#include "conductor/driver.hpp"
#include "conductor/rpc/backend.hpp"
#include "conductor/rpc/server.hpp"
#include "conductor/rpc/stub.hpp"
#include "conductor/rpc/wire.hpp"
#include "conductor/testcases.hpp"

using namespace conductor;
using namespace conductor::rpc;

TEST_CASE("base64 round-trips arbitrary bytes") {
  for (const std::string& s :
       {std::string(""), std::string("a"), std::string("ab"), std::string("abc"),
        std::string("hello world"), std::string("\x00\x01\xff\x7f", 4)}) {
    REQUIRE(base64_decode(base64_encode(s)) == s);
  }
  REQUIRE(base64_encode("abc") == "YWJj");
  REQUIRE_THROWS_AS(base64_decode("!!!!"), ConfigError);
}

TEST_CASE("wire schema round-trips") {
  WireMessage m;
  m.id = "m0-3";
  m.from = 0;
  m.to = 2;
  m.type = "Prepare";
  m.data = WireMessage::encode_payload({{"view", "0"}, {"request", "alpha"}});
  WireMessage back = wire_message_from_json(to_json(m));
  REQUIRE(back.id == m.id);
  REQUIRE(back.payload() == FieldMap{{"view", "0"}, {"request", "alpha"}});
  REQUIRE(WireMessage{.data = WireMessage::encode_payload({})}.payload().empty());

  WireEvent e{1, "MessageSend", {{"message_id", "m1-0"}}};
  WireEvent eback = wire_event_from_json(to_json(e));
  REQUIRE(eback.replica == 1);
  REQUIRE(eback.type == "MessageSend");
  REQUIRE(eback.params.at("message_id") == "m1-0");

  ReplicaStatus st{true, false, true};
  ReplicaStatus sback = status_from_json(to_json(st));
  REQUIRE(sback.final_state);
  REQUIRE_FALSE(sback.bottom);
  REQUIRE(sback.timeout);
}

TEST_CASE("ingress is gated on registration and preserves order") {
  ApiServer server;
  server.start("127.0.0.1", 0);
  httplib::Client client(server.address());

  WireEvent e{0, "Tick", {}};
  auto res = client.Post("/event", to_json(e).dump(), "application/json");
  REQUIRE(res);
  REQUIRE(res->status == 400);  // replica 0 not registered yet

  auto reg = client.Post("/replica", nlohmann::json{{"id", 0}, {"addr", "http://127.0.0.1:1"}}.dump(),
                         "application/json");
  REQUIRE(reg->status == 200);
  REQUIRE(server.replicas().at(0) == "http://127.0.0.1:1");
  REQUIRE(server.wait_for_replicas(1, 100));
  REQUIRE_FALSE(server.wait_for_replicas(2, 50));

  for (int i = 0; i < 3; ++i) {
    WireEvent tick{0, "Tick", {{"n", std::to_string(i)}}};
    REQUIRE(client.Post("/event", to_json(tick).dump(), "application/json")->status == 200);
  }
  WireMessage m;
  m.id = "m0-0";
  m.from = 0;
  m.to = 1;
  m.type = "Ping";
  m.data = WireMessage::encode_payload({});
  REQUIRE(client.Post("/message", to_json(m).dump(), "application/json")->status == 200);

  auto items = server.drain();
  REQUIRE(items.size() == 4);
  for (int i = 0; i < 3; ++i) {
    auto* ev = std::get_if<WireEvent>(&items[i]);
    REQUIRE(ev != nullptr);
    REQUIRE(ev->params.at("n") == std::to_string(i));
  }
  REQUIRE(std::get_if<WireMessage>(&items[3]) != nullptr);
  REQUIRE(server.drain().empty());
  server.stop();
}

TEST_CASE("dispatch to an unregistered or dead replica fails loudly") {
  ApiServer server;
  server.start("127.0.0.1", 0);
  Dispatcher d(server);
  REQUIRE_THROWS_AS(d.post(3, "/step", {}), UnreachableReplica);
  REQUIRE_THROWS_AS(d.get(3, "/status"), UnreachableReplica);
  // registered but nobody listening there
  httplib::Client client(server.address());
  client.Post("/replica", nlohmann::json{{"id", 3}, {"addr", "http://127.0.0.1:9"}}.dump(),
              "application/json");
  REQUIRE_THROWS_AS(d.post(3, "/step", {}), UnreachableReplica);
  server.stop();
}

TEST_CASE("rpc mode reproduces in-process outcomes byte for byte") {
  const RegisteredCase* rc = find_testcase("drop-prepare-three");
  auto setup = rc->make_setup(4, 1);
  TestCase tc = rc->make();

  SuiteReport inproc = run_suite(tc, setup, 3, 5);

  ApiServer server;
  server.start("127.0.0.1", 0);
  std::vector<std::unique_ptr<StubReplica>> stubs;
  std::vector<std::thread> threads;
  for (int r = 0; r < 4; ++r) {
    stubs.push_back(std::make_unique<StubReplica>(setup.automata[r], server.address()));
    threads.emplace_back([&, r] { stubs[r]->run("127.0.0.1", 0); });
  }
  {
    RpcBackend backend(server, 4);
    SuiteReport rpc_report = run_suite(tc, backend, 3, 5);
    REQUIRE(report_to_text(rpc_report) == report_to_text(inproc));
    for (std::size_t i = 0; i < inproc.iterations.size(); ++i) {
      const auto& a = inproc.iterations[i];
      const auto& b = rpc_report.iterations[i];
      REQUIRE(a.outcome == b.outcome);
      REQUIRE(a.schedule_dump == b.schedule_dump);
      REQUIRE(a.events.size() == b.events.size());
      for (std::size_t j = 0; j < a.events.size(); ++j) {
        REQUIRE(key_of(a.events[j]) == key_of(b.events[j]));
        REQUIRE(a.events[j].kind == b.events[j].kind);
        if (a.events[j].message)
          REQUIRE(a.events[j].message->uid == b.events[j].message->uid);
        if (a.events[j].note) REQUIRE(a.events[j].note->name == b.events[j].note->name);
      }
    }
    backend.stop_replicas();
  }
  for (auto& t : threads) t.join();
  server.stop();
}
