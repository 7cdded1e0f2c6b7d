#include "macforge/event_log.hpp"

#include <array>
#include <istream>
#include <ostream>
#include <utility>

#include <json.hpp>

#include "macforge/error.hpp"

namespace macforge::env {

namespace {

constexpr std::array<std::pair<EventType, std::string_view>, 11> kNames{{
    {EventType::kGenerate, "generate"},
    {EventType::kOverflow, "overflow"},
    {EventType::kTransmit, "transmit"},
    {EventType::kDeliver, "deliver"},
    {EventType::kRedeliver, "redeliver"},
    {EventType::kErasure, "erasure"},
    {EventType::kCollision, "collision"},
    {EventType::kDelete, "delete"},
    {EventType::kActivate, "activate"},
    {EventType::kDepart, "depart"},
    {EventType::kDepartPdu, "depart_pdu"},
}};

}  // namespace

std::string_view to_string(EventType type) {
  for (const auto& [t, name] : kNames) {
    if (t == type) return name;
  }
  return "unknown";
}

EventType event_type_from_string(std::string_view name) {
  for (const auto& [t, n] : kNames) {
    if (n == name) return t;
  }
  throw EncodingError("unknown event type '" + std::string(name) + "'");
}

std::string to_json_line(const Event& e) {
  nlohmann::ordered_json j;
  j["slot"] = e.slot;
  j["type"] = to_string(e.type);
  j["ue"] = e.ue;
  j["pdu"] = e.pdu;
  j["received"] = e.received;
  return j.dump();
}

Event event_from_json_line(const std::string& line) {
  try {
    const auto j = nlohmann::json::parse(line);
    Event e;
    e.slot = j.at("slot").get<int>();
    e.type = event_type_from_string(j.at("type").get<std::string>());
    e.ue = j.at("ue").get<int>();
    e.pdu = j.at("pdu").get<std::uint64_t>();
    e.received = j.at("received").get<bool>();
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw EncodingError(std::string("malformed event line: ") + ex.what());
  }
}

void write_jsonl(std::ostream& os, const std::vector<Event>& events) {
  for (const auto& e : events) os << to_json_line(e) << '\n';
}

std::vector<Event> read_jsonl(std::istream& is) {
  std::vector<Event> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    out.push_back(event_from_json_line(line));
  }
  return out;
}

EventTally tally(const std::vector<Event>& events) {
  EventTally t;
  for (const auto& e : events) {
    switch (e.type) {
      case EventType::kGenerate: ++t.generated; break;
      case EventType::kOverflow: ++t.generated; ++t.dropped; break;
      case EventType::kTransmit: ++t.transmissions; break;
      case EventType::kDeliver: ++t.received; break;
      case EventType::kRedeliver: ++t.redelivered; break;
      case EventType::kErasure: ++t.erasures; break;
      case EventType::kCollision: ++t.collisions; break;
      case EventType::kDelete:
        ++(e.received ? t.deleted_received : t.deleted_unreceived);
        break;
      case EventType::kDepartPdu:
        ++(e.received ? t.departed_received : t.departed_unreceived);
        break;
      case EventType::kActivate:
      case EventType::kDepart:
        break;
    }
  }
  return t;
}

}  // namespace macforge::env
