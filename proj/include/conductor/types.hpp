#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>

namespace conductor {

// Index of a replica within a system of n replicas.
struct ReplicaId {
  int id = -1;
  std::string label;

  friend bool operator==(const ReplicaId& a, const ReplicaId& b) {
    return a.id == b.id;
  }
  friend bool operator!=(const ReplicaId& a, const ReplicaId& b) {
    return !(a == b);
  }
  friend bool operator<(const ReplicaId& a, const ReplicaId& b) {
    return a.id < b.id;
  }
};

using MessageUid = std::uint64_t;

// Decoded payload view. Codecs map this to/from the wire byte form.
using FieldMap = std::map<std::string, std::string>;

// An addressed protocol message. Two messages with equal content but
// distinct uids are distinct objects.
struct Message {
  MessageUid uid = 0;
  ReplicaId from;
  ReplicaId to;
  std::string mtype;
  FieldMap payload;
  bool fictitious = false;

  std::string field(const std::string& key) const {
    auto it = payload.find(key);
    return it == payload.end() ? std::string() : it->second;
  }
};

enum class EventKind { send, receive, internal };

inline const char* to_string(EventKind k) {
  switch (k) {
    case EventKind::send: return "send";
    case EventKind::receive: return "receive";
    case EventKind::internal: return "internal";
  }
  return "?";
}

// Payload of an internal step, e.g. a decision or a timeout.
struct InternalNote {
  std::string name;
  FieldMap params;

  friend bool operator==(const InternalNote&, const InternalNote&) = default;

  std::string param(const std::string& key) const {
    auto it = params.find(key);
    return it == params.end() ? std::string() : it->second;
  }
};

// An occurrence at a replica. Send/receive events carry a snapshot of the
// message; internal events carry an InternalNote. seq strictly increases
// per replica in emission order.
struct Event {
  ReplicaId replica;
  EventKind kind = EventKind::internal;
  std::uint64_t seq = 0;
  std::optional<Message> message;
  std::optional<InternalNote> note;

  bool is_message_event() const { return message.has_value(); }
};

// Stable identity of an event across replays: (replica, seq).
struct EventKey {
  int replica = -1;
  std::uint64_t seq = 0;

  friend bool operator==(const EventKey& a, const EventKey& b) {
    return a.replica == b.replica && a.seq == b.seq;
  }
  friend bool operator<(const EventKey& a, const EventKey& b) {
    if (a.replica != b.replica) return a.replica < b.replica;
    return a.seq < b.seq;
  }
};

inline EventKey key_of(const Event& e) { return {e.replica.id, e.seq}; }

struct HarnessError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NoStepEnabled : HarnessError {
  using HarnessError::HarnessError;
};
struct ReplicaFinal : HarnessError {
  using HarnessError::HarnessError;
};
struct NotInPool : HarnessError {
  using HarnessError::HarnessError;
};
struct EmptyInbox : HarnessError {
  using HarnessError::HarnessError;
};
struct MalformedTrace : HarnessError {
  using HarnessError::HarnessError;
};
struct NotDelivered : HarnessError {
  using HarnessError::HarnessError;
};
struct InvalidDepth : HarnessError {
  using HarnessError::HarnessError;
};
struct DuplicateMessage : HarnessError {
  using HarnessError::HarnessError;
};
struct UnknownPredecessor : HarnessError {
  using HarnessError::HarnessError;
};
struct OutOfOrderNotification : HarnessError {
  using HarnessError::HarnessError;
};
struct ActionFailure : HarnessError {
  using HarnessError::HarnessError;
};
struct ConfigError : HarnessError {
  using HarnessError::HarnessError;
};
struct IncompleteHistory : HarnessError {
  using HarnessError::HarnessError;
};
struct NoMatchInNormalRun : HarnessError {
  using HarnessError::HarnessError;
};
struct UnknownReplica : HarnessError {
  using HarnessError::HarnessError;
};
struct UnreachableReplica : HarnessError {
  using HarnessError::HarnessError;
};
struct BindError : HarnessError {
  using HarnessError::HarnessError;
};

}  // namespace conductor
