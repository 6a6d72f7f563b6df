#pragma once

#include <map>
#include <string>
#include <vector>

#include "conductor/driver.hpp"
#include "conductor/rpc/server.hpp"
#include "conductor/rpc/wire.hpp"

namespace conductor::rpc {

// ExecutionBackend over registered out-of-process replicas. The driver's
// product loop is unchanged; each replica step becomes a synchronous
// dispatch, and the events/messages the stub posts back are joined into the
// same Event structures the in-process backend produces, with uids and seqs
// assigned on this side in arrival order.
class RpcBackend : public ExecutionBackend {
 public:
  RpcBackend(ApiServer& server, int n) : server_(server), dispatcher_(server), n_(n) {
    if (!server_.wait_for_replicas(static_cast<std::size_t>(n)))
      throw UnreachableReplica("replicas did not register in time");
    status_.resize(n);
    for (int r = 0; r < n; ++r) status_[r] = status_from_json(dispatcher_.get(r, "/status"));
  }

  int num_replicas() const override { return n_; }

  void reset() override {
    for (int r = 0; r < n_; ++r) {
      auto resp = dispatcher_.post(r, "/directive", {{"action", "restart"}});
      status_[r] = status_from_json(resp.at("status"));
    }
    server_.drain();  // discard anything stale
    next_seq_.assign(n_, 0);
    next_uid_ = 1;
    uid_of_wire_.clear();
    wire_of_uid_.clear();
  }

  bool is_final(int r) override { return status_[r].final_state; }
  bool bottom_enabled(int r) override { return !status_[r].final_state && status_[r].bottom; }
  bool timeout_enabled(int r) override { return !status_[r].final_state && status_[r].timeout; }

  Event step_bottom(int r, bool via_timeout) override {
    auto resp = dispatcher_.post(r, "/step", {{"timeout", via_timeout}});
    status_[r] = status_from_json(resp.at("status"));
    auto items = server_.drain();
    const WireMessage* sent = nullptr;
    const WireEvent* event = nullptr;
    for (const auto& item : items) {
      if (auto* m = std::get_if<WireMessage>(&item)) sent = m;
      if (auto* e = std::get_if<WireEvent>(&item))
        if (e->replica == r) event = e;
    }
    if (!event) throw MalformedTrace("stub step produced no event");
    Event e;
    e.replica = {r, "r" + std::to_string(r)};
    e.seq = next_seq_[r]++;
    if (event->type == "MessageSend") {
      if (!sent || sent->id != event->params.at("message_id"))
        throw MalformedTrace("send event without matching wire message");
      Message m;
      m.uid = next_uid_++;
      m.from = {sent->from, "r" + std::to_string(sent->from)};
      m.to = {sent->to, "r" + std::to_string(sent->to)};
      m.mtype = sent->type;
      m.payload = sent->payload();
      uid_of_wire_[sent->id] = m.uid;
      wire_of_uid_[m.uid] = sent->id;
      e.kind = EventKind::send;
      e.message = std::move(m);
    } else {
      e.kind = EventKind::internal;
      e.note = InternalNote{event->type, event->params};
    }
    return e;
  }

  Event step_receive(int r, const Message& m) override {
    WireMessage wm;
    auto it = wire_of_uid_.find(m.uid);
    wm.id = it != wire_of_uid_.end() ? it->second : "inj-" + std::to_string(m.uid);
    wm.from = m.from.id;
    wm.to = m.to.id;
    wm.type = m.mtype;
    wm.data = WireMessage::encode_payload(m.payload);
    auto resp = dispatcher_.post(r, "/message", to_json(wm));
    status_[r] = status_from_json(resp.at("status"));
    auto items = server_.drain();
    const WireEvent* event = nullptr;
    for (const auto& item : items)
      if (auto* e = std::get_if<WireEvent>(&item))
        if (e->replica == r && e->type == "MessageReceive") event = e;
    if (!event) throw MalformedTrace("stub receive produced no event");
    Event e;
    e.replica = {r, "r" + std::to_string(r)};
    e.kind = EventKind::receive;
    e.seq = next_seq_[r]++;
    e.message = m;
    return e;
  }

  void stop_replicas() {
    for (int r = 0; r < n_; ++r) {
      try {
        dispatcher_.post(r, "/directive", {{"action", "stop"}});
      } catch (const std::exception&) {
        // already gone
      }
    }
  }

 private:
  ApiServer& server_;
  Dispatcher dispatcher_;
  int n_;
  std::vector<ReplicaStatus> status_;
  std::vector<std::uint64_t> next_seq_;
  MessageUid next_uid_ = 1;
  std::map<std::string, MessageUid> uid_of_wire_;
  std::map<MessageUid, std::string> wire_of_uid_;
};

}  // namespace conductor::rpc
