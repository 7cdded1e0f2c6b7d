#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace macforge::env {

enum class EventType {
  kGenerate,        // new dPDU queued
  kOverflow,        // new dPDU dropped, buffer full
  kTransmit,        // UE put a copy of its head-of-line dPDU on the channel
  kDeliver,         // first successful reception of a dPDU (xi_rec = 1)
  kRedeliver,       // successful reception of an already received dPDU
  kErasure,         // lone transmission lost to the block error rate
  kCollision,       // two or more transmitters
  kDelete,          // head-of-line dPDU removed; `received` tells which kind
  kActivate,        // UE joined mid-episode
  kDepart,          // UE left mid-episode
  kDepartPdu,       // buffered dPDU discarded with a departing UE
};

struct Event {
  int slot = 0;
  EventType type = EventType::kGenerate;
  int ue = 0;  // 0 when not tied to one UE
  std::uint64_t pdu = 0;
  bool received = false;

  bool operator==(const Event&) const = default;
};

std::string_view to_string(EventType type);
EventType event_type_from_string(std::string_view name);

std::string to_json_line(const Event& e);
Event event_from_json_line(const std::string& line);

void write_jsonl(std::ostream& os, const std::vector<Event>& events);
std::vector<Event> read_jsonl(std::istream& is);

// Tallies used by the conservation and reward-decomposition checks. Every
// generated dPDU lands in exactly one of: received, deleted_unreceived,
// departed_unreceived, dropped, or (still buffered and never received).
struct EventTally {
  std::int64_t generated = 0;
  std::int64_t dropped = 0;
  std::int64_t received = 0;
  std::int64_t redelivered = 0;
  std::int64_t deleted_received = 0;
  std::int64_t deleted_unreceived = 0;
  std::int64_t departed_received = 0;
  std::int64_t departed_unreceived = 0;
  std::int64_t collisions = 0;
  std::int64_t erasures = 0;
  std::int64_t transmissions = 0;
};

EventTally tally(const std::vector<Event>& events);

}  // namespace macforge::env
