#pragma once

#include <array>
#include <string>

#include <nlohmann/json.hpp>

#include "conductor/types.hpp"

namespace conductor::rpc {

// --- base64 (standard alphabet, padded) ---

inline std::string base64_encode(const std::string& in) {
  static const char* tbl = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((in.size() + 2) / 3 * 4);
  unsigned int val = 0;
  int bits = -6;
  for (unsigned char c : in) {
    val = (val << 8) + c;
    bits += 8;
    while (bits >= 0) {
      out.push_back(tbl[(val >> bits) & 0x3f]);
      bits -= 6;
    }
  }
  if (bits > -6) out.push_back(tbl[((val << 8) >> (bits + 8)) & 0x3f]);
  while (out.size() % 4) out.push_back('=');
  return out;
}

inline std::string base64_decode(const std::string& in) {
  static const auto rev = [] {
    std::array<int, 256> t{};
    t.fill(-1);
    const char* tbl = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    for (int i = 0; i < 64; ++i) t[(unsigned char)tbl[i]] = i;
    return t;
  }();
  std::string out;
  unsigned int val = 0;
  int bits = -8;
  for (unsigned char c : in) {
    if (c == '=') break;
    int d = rev[c];
    if (d < 0) throw ConfigError("invalid base64 input");
    val = (val << 6) + d;
    bits += 6;
    if (bits >= 0) {
      out.push_back(char((val >> bits) & 0xff));
      bits -= 8;
    }
  }
  return out;
}

// --- wire schemas ---
// WireMessage: {"id": string, "from": int, "to": int, "type": string,
//               "data": base64 of the payload field map encoded as JSON}
// WireEvent:   {"replica": int, "type": "MessageSend"|"MessageReceive"|<note>,
//               "params": string map; message events carry "message_id"}
// Directive:   {"action": "start"|"stop"|"restart"}

struct WireMessage {
  std::string id;
  int from = -1;
  int to = -1;
  std::string type;
  std::string data;  // base64 bytes

  FieldMap payload() const {
    std::string raw = base64_decode(data);
    if (raw.empty()) return {};
    return nlohmann::json::parse(raw).get<FieldMap>();
  }

  static std::string encode_payload(const FieldMap& payload) {
    return base64_encode(nlohmann::json(payload).dump());
  }
};

struct WireEvent {
  int replica = -1;
  std::string type;
  FieldMap params;
};

struct Directive {
  std::string action;  // start | stop | restart
};

inline nlohmann::json to_json(const WireMessage& m) {
  return {{"id", m.id}, {"from", m.from}, {"to", m.to}, {"type", m.type}, {"data", m.data}};
}

inline WireMessage wire_message_from_json(const nlohmann::json& j) {
  WireMessage m;
  m.id = j.at("id").get<std::string>();
  m.from = j.at("from").get<int>();
  m.to = j.at("to").get<int>();
  m.type = j.at("type").get<std::string>();
  m.data = j.at("data").get<std::string>();
  return m;
}

inline nlohmann::json to_json(const WireEvent& e) {
  return {{"replica", e.replica}, {"type", e.type}, {"params", e.params}};
}

inline WireEvent wire_event_from_json(const nlohmann::json& j) {
  WireEvent e;
  e.replica = j.at("replica").get<int>();
  e.type = j.at("type").get<std::string>();
  e.params = j.at("params").get<FieldMap>();
  return e;
}

// Replica status piggybacked on every stub response.
struct ReplicaStatus {
  bool final_state = false;
  bool bottom = false;
  bool timeout = false;
};

inline nlohmann::json to_json(const ReplicaStatus& s) {
  return {{"final", s.final_state}, {"bottom", s.bottom}, {"timeout", s.timeout}};
}

inline ReplicaStatus status_from_json(const nlohmann::json& j) {
  ReplicaStatus s;
  s.final_state = j.at("final").get<bool>();
  s.bottom = j.at("bottom").get<bool>();
  s.timeout = j.at("timeout").get<bool>();
  return s;
}

}  // namespace conductor::rpc
