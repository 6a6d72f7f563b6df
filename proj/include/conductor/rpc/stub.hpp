#pragma once

#include <chrono>
#include <mutex>
#include <string>
#include <thread>

#include <httplib.h>

#include "conductor/automaton.hpp"
#include "conductor/rpc/wire.hpp"

namespace conductor::rpc {

// An out-of-process replica: wraps one automaton behind the wire protocol.
// The harness triggers every step by HTTP; resulting events and sends are
// posted back to the control-plane server before the trigger is acked, so
// ingress order matches step order.
//   POST /directive {"action": start|stop|restart}
//   POST /step      {"timeout": bool}   (Internal/Send rule trigger)
//   POST /message   WireMessage         (Receive rule)
//   GET  /status
class StubReplica {
 public:
  StubReplica(AutomatonPtr automaton, std::string server_addr)
      : automaton_(std::move(automaton)),
        server_addr_(std::move(server_addr)),
        state_(automaton_->initial_state()) {
    server_.Post("/directive", [this](const httplib::Request& req, httplib::Response& res) {
      handle(req, res, [&](const nlohmann::json& j) {
        std::string action = j.at("action").get<std::string>();
        if (action == "restart") {
          state_ = automaton_->initial_state();
          next_msg_ = 0;
        } else if (action == "stop") {
          std::thread([this] {
            std::this_thread::sleep_for(std::chrono::milliseconds(100));
            server_.stop();
          }).detach();
        } else if (action != "start") {
          throw ConfigError("unknown directive action: " + action);
        }
      });
    });
    server_.Post("/step", [this](const httplib::Request& req, httplib::Response& res) {
      handle(req, res, [&](const nlohmann::json& j) {
        bool via_timeout = j.value("timeout", false);
        StepInput input = via_timeout ? StepInput{TimeoutInput{}} : StepInput{Bottom{}};
        auto out = automaton_->step(state_, input);
        if (!out) throw NoStepEnabled("no bottom step enabled");
        if (out->send) {
          WireMessage wm;
          wm.id = "m" + std::to_string(automaton_->id().id) + "-" + std::to_string(next_msg_++);
          wm.from = automaton_->id().id;
          wm.to = out->send->to.id;
          wm.type = out->send->mtype;
          wm.data = WireMessage::encode_payload(out->send->payload);
          post_to_server("/message", to_json(wm));
          WireEvent we{automaton_->id().id, "MessageSend", {{"message_id", wm.id}}};
          post_to_server("/event", to_json(we));
        } else {
          InternalNote note = out->note.value_or(InternalNote{"step", {}});
          WireEvent we{automaton_->id().id, note.name, note.params};
          post_to_server("/event", to_json(we));
        }
        state_ = out->next;
      });
    });
    server_.Post("/message", [this](const httplib::Request& req, httplib::Response& res) {
      handle(req, res, [&](const nlohmann::json& j) {
        WireMessage wm = wire_message_from_json(j);
        Message m;
        m.from = {wm.from, "r" + std::to_string(wm.from)};
        m.to = {wm.to, "r" + std::to_string(wm.to)};
        m.mtype = wm.type;
        m.payload = wm.payload();
        auto out = automaton_->step(state_, StepInput{&m});
        if (!out) throw NoStepEnabled("message not consumable");
        state_ = out->next;
        WireEvent we{automaton_->id().id, "MessageReceive", {{"message_id", wm.id}}};
        post_to_server("/event", to_json(we));
      });
    });
    server_.Get("/status", [this](const httplib::Request&, httplib::Response& res) {
      std::lock_guard lock(mu_);
      res.set_content(to_json(status()).dump(), "application/json");
    });
  }

  // Binds, registers with the control plane, then serves until stopped.
  void run(const std::string& host, int port) {
    int bound = port;
    if (port == 0) {
      bound = server_.bind_to_any_port(host);
      if (bound < 0) throw BindError("cannot bind " + host);
    } else if (!server_.bind_to_port(host, port)) {
      throw BindError("cannot bind " + host + ":" + std::to_string(port));
    }
    std::string addr = "http://" + host + ":" + std::to_string(bound);
    httplib::Client client(server_addr_);
    client.set_connection_timeout(5, 0);
    auto res = client.Post(
        "/replica", nlohmann::json{{"id", automaton_->id().id}, {"addr", addr}}.dump(),
        "application/json");
    if (!res || res->status != 200) throw UnreachableReplica("cannot register with " + server_addr_);
    server_.listen_after_bind();
  }

 private:
  ReplicaStatus status() const {
    ReplicaStatus s;
    s.final_state = automaton_->is_final(state_);
    s.bottom = automaton_->bottom_enabled(state_);
    s.timeout = automaton_->timeout_enabled(state_);
    return s;
  }

  void post_to_server(const std::string& path, const nlohmann::json& body) {
    httplib::Client client(server_addr_);
    client.set_connection_timeout(5, 0);
    auto res = client.Post(path, body.dump(), "application/json");
    if (!res || res->status != 200)
      throw UnreachableReplica("ingress post " + path + " failed");
  }

  template <class Fn>
  void handle(const httplib::Request& req, httplib::Response& res, Fn fn) {
    std::lock_guard lock(mu_);
    try {
      fn(req.body.empty() ? nlohmann::json::object() : nlohmann::json::parse(req.body));
      res.set_content(nlohmann::json{{"ok", true}, {"status", to_json(status())}}.dump(),
                      "application/json");
    } catch (const NoStepEnabled& ex) {
      res.status = 409;
      res.set_content(nlohmann::json{{"ok", false}, {"error", ex.what()}}.dump(),
                      "application/json");
    } catch (const std::exception& ex) {
      res.status = 400;
      res.set_content(nlohmann::json{{"ok", false}, {"error", ex.what()}}.dump(),
                      "application/json");
    }
  }

  AutomatonPtr automaton_;
  std::string server_addr_;
  httplib::Server server_;
  std::mutex mu_;
  StateBox state_;
  std::uint64_t next_msg_ = 0;
};

}  // namespace conductor::rpc
