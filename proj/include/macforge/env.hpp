#pragma once

#include <cstdint>
#include <deque>
#include <span>
#include <vector>

#include "macforge/config.hpp"
#include "macforge/event_log.hpp"
#include "macforge/rng.hpp"

namespace macforge::env {

enum class PhyAction : int { kDoNothing = 0, kTransmit = 1, kDelete = 2 };
inline constexpr int kPhyActionCount = 3;

// Placeholder for "no previous control message" at the start of an episode.
inline constexpr int kNoMessage = 0;

struct DPdu {
  std::uint64_t id = 0;
  int gen_slot = 0;
  bool received = false;
};

struct UeAction {
  PhyAction phy = PhyAction::kDoNothing;
  int ucm = 1;  // 1..U

  bool operator==(const UeAction&) const = default;
};

struct UeState {
  int ue_id = 0;
  std::deque<DPdu> buffer;  // head = front, ordered by gen_slot
  UeAction last_action;
  int last_dcm = kNoMessage;
  bool active = false;
  bool acted = false;  // false until the UE's first slot completes
};

struct ChannelState {
  int x = 0;  // 0 idle, n single transmitter, slot_count+1 collision
  bool delivered = false;
};

// What UE n sees before acting: its occupancy after the previous slot, the
// action it took there and the DCM the BS sent it there.
struct UeObs {
  int ue_id = 0;
  int buffer_len = 0;
  UeAction prev_action;
  int prev_dcm = kNoMessage;

  bool operator==(const UeObs&) const = default;
};

struct BsUeMessage {
  int ue_id = 0;
  int ucm = kNoMessage;
  int prev_dcm = kNoMessage;

  bool operator==(const BsUeMessage&) const = default;
};

struct BsObs {
  int channel = 0;
  int slot_count = 0;  // N used for the collision code N+1
  std::vector<BsUeMessage> per_ue;  // ascending ue_id, exactly the active set

  bool operator==(const BsObs&) const = default;
};

// Entries are aligned with the active UE ids in ascending order.
struct JointAction {
  std::vector<UeAction> ue_actions;
  std::vector<int> bs_dcms;
};

struct StepOutcome {
  double reward = 0.0;
  std::vector<UeObs> next_ue_obs;
  BsObs next_bs_obs;
  int received_flag = 0;
  bool done = false;
  ChannelState channel;
  std::vector<Event> events;
};

struct EnvState {
  EnvConfig config;
  int slot = 0;
  int slot_count = 0;
  std::vector<UeState> ues;  // index i holds ue_id i+1
  std::uint64_t next_pdu_id = 1;
  int last_channel = 0;
  std::vector<Event> log;
  std::vector<double> rewards;

  std::vector<int> active_ue_ids() const;
  int active_count() const;
  bool done() const { return slot >= config.episode_length; }
};

// N drawn uniformly from the admissible range, UEs 1..N active with empty
// buffers, slot 0.
EnvState reset_state(const EnvConfig& config, Rng& rng);

// One Bernoulli(p_a) draw per active UE in ascending id order. Full buffers
// drop the arrival and log an overflow.
std::vector<int> generate_arrivals(EnvState& state, Rng& rng);

// `transmitters` holds UE ids. A single transmitter survives the erasure with
// probability 1 - tbler; the random draw happens only in that case.
ChannelState resolve_channel(std::span<const int> transmitters, int slot_count,
                             double tbler, Rng& rng);

StepOutcome step(EnvState& state, const JointAction& action, Rng& rng);

// Per-slot churn: with probability churn_prob either the lowest inactive UE
// joins or a random active UE leaves, each with probability 1/2. Moves that
// would leave the admissible N range are no-ops.
void apply_population_dynamics(EnvState& state, Rng& rng);

double episode_return(std::span<const double> rewards, double gamma);

std::vector<UeObs> observe_ues(const EnvState& state);
BsObs observe_bs(const EnvState& state);

// Convenience owner of state + generator.
class UdtsEnv {
 public:
  explicit UdtsEnv(EnvConfig config);

  void reset(std::uint64_t seed);
  StepOutcome step(const JointAction& action);

  const EnvState& state() const { return state_; }
  const EnvConfig& config() const { return state_.config; }
  bool done() const { return state_.done(); }
  int slot() const { return state_.slot; }
  std::vector<int> active_ue_ids() const { return state_.active_ue_ids(); }
  std::vector<UeObs> ue_observations() const { return ue_obs_; }
  const BsObs& bs_observation() const { return bs_obs_; }
  const std::vector<Event>& event_log() const { return state_.log; }
  const std::vector<double>& rewards() const { return state_.rewards; }

 private:
  EnvState state_;
  Rng rng_;
  std::vector<UeObs> ue_obs_;
  BsObs bs_obs_;
  bool initialized_ = false;
};

// Fraction of slots with a first-time reception, recomputed from raw events.
double throughput(const std::vector<Event>& events, int episode_length);

}  // namespace macforge::env
