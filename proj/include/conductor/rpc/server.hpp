#pragma once

#include <chrono>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <httplib.h>

#include "conductor/rpc/wire.hpp"
#include "conductor/types.hpp"

namespace conductor::rpc {

// One ingress item, in arrival order.
using IngressItem = std::variant<WireEvent, WireMessage>;

// Control-plane API server. Endpoints accept concurrently but hand off
// through one mutex-serialized queue, so the driver stays single-threaded.
//   POST /replica  {"id": int, "addr": string}
//   POST /event    WireEvent  (rejected with 400 UnknownReplica before registration)
//   POST /message  WireMessage
class ApiServer {
 public:
  ApiServer() {
    server_.Post("/replica", [this](const httplib::Request& req, httplib::Response& res) {
      handle(req, res, [&](const nlohmann::json& j) {
        int id = j.at("id").get<int>();
        std::string addr = j.at("addr").get<std::string>();
        std::lock_guard lock(mu_);
        replicas_[id] = addr;
      });
    });
    server_.Post("/event", [this](const httplib::Request& req, httplib::Response& res) {
      handle(req, res, [&](const nlohmann::json& j) {
        WireEvent e = wire_event_from_json(j);
        std::lock_guard lock(mu_);
        if (!replicas_.count(e.replica)) throw UnknownReplica("replica not registered");
        queue_.push_back(std::move(e));
      });
    });
    server_.Post("/message", [this](const httplib::Request& req, httplib::Response& res) {
      handle(req, res, [&](const nlohmann::json& j) {
        WireMessage m = wire_message_from_json(j);
        std::lock_guard lock(mu_);
        if (!replicas_.count(m.from)) throw UnknownReplica("sender not registered");
        queue_.push_back(std::move(m));
      });
    });
  }

  ~ApiServer() { stop(); }

  // Binds and serves on a background thread. Port 0 picks a free port.
  void start(const std::string& host, int port) {
    if (port == 0) {
      port_ = server_.bind_to_any_port(host);
      if (port_ < 0) throw BindError("cannot bind " + host);
    } else {
      if (!server_.bind_to_port(host, port)) throw BindError("cannot bind " + host + ":" + std::to_string(port));
      port_ = port;
    }
    host_ = host;
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  void stop() {
    if (thread_.joinable()) {
      server_.stop();
      thread_.join();
    }
  }

  int port() const { return port_; }
  std::string address() const { return "http://" + host_ + ":" + std::to_string(port_); }

  std::map<int, std::string> replicas() const {
    std::lock_guard lock(mu_);
    return replicas_;
  }

  bool wait_for_replicas(std::size_t n, int timeout_ms = 15000) {
    auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);
    for (;;) {
      {
        std::lock_guard lock(mu_);
        if (replicas_.size() >= n) return true;
      }
      if (std::chrono::steady_clock::now() > deadline) return false;
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
  }

  std::vector<IngressItem> drain() {
    std::lock_guard lock(mu_);
    std::vector<IngressItem> out;
    out.swap(queue_);
    return out;
  }

 private:
  template <class Fn>
  void handle(const httplib::Request& req, httplib::Response& res, Fn fn) {
    try {
      fn(nlohmann::json::parse(req.body));
      res.set_content("{\"ok\":true}", "application/json");
    } catch (const std::exception& ex) {
      res.status = 400;
      res.set_content(nlohmann::json{{"ok", false}, {"error", ex.what()}}.dump(),
                      "application/json");
    }
  }

  httplib::Server server_;
  std::thread thread_;
  std::string host_;
  int port_ = -1;
  mutable std::mutex mu_;
  std::map<int, std::string> replicas_;
  std::vector<IngressItem> queue_;
};

// Sends messages and directives to a replica's registered address.
// One attempt, no retries.
class Dispatcher {
 public:
  explicit Dispatcher(const ApiServer& server) : server_(server) {}

  nlohmann::json post(int replica, const std::string& path, const nlohmann::json& body) const {
    auto replicas = server_.replicas();
    auto it = replicas.find(replica);
    if (it == replicas.end())
      throw UnreachableReplica("replica " + std::to_string(replica) + " not registered");
    httplib::Client client(it->second);
    client.set_connection_timeout(5, 0);
    client.set_read_timeout(10, 0);
    auto res = client.Post(path, body.dump(), "application/json");
    if (!res || res->status >= 500)
      throw UnreachableReplica("dispatch to replica " + std::to_string(replica) + " failed");
    if (res->status != 200)
      throw HarnessError("replica " + std::to_string(replica) + " rejected " + path + ": " + res->body);
    return res->body.empty() ? nlohmann::json::object() : nlohmann::json::parse(res->body);
  }

  nlohmann::json get(int replica, const std::string& path) const {
    auto replicas = server_.replicas();
    auto it = replicas.find(replica);
    if (it == replicas.end())
      throw UnreachableReplica("replica " + std::to_string(replica) + " not registered");
    httplib::Client client(it->second);
    client.set_connection_timeout(5, 0);
    auto res = client.Get(path);
    if (!res || res->status != 200)
      throw UnreachableReplica("status query to replica " + std::to_string(replica) + " failed");
    return nlohmann::json::parse(res->body);
  }

 private:
  const ApiServer& server_;
};

}  // namespace conductor::rpc
