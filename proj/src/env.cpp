#include "macforge/env.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "macforge/error.hpp"

namespace macforge::env {

std::vector<int> EnvState::active_ue_ids() const {
  std::vector<int> ids;
  for (const auto& ue : ues) {
    if (ue.active) ids.push_back(ue.ue_id);
  }
  return ids;
}

int EnvState::active_count() const {
  return static_cast<int>(std::count_if(ues.begin(), ues.end(),
                                        [](const UeState& u) { return u.active; }));
}

namespace {

void fresh_ue(UeState& ue) {
  ue.buffer.clear();
  ue.last_action = UeAction{};
  ue.last_dcm = kNoMessage;
  ue.acted = false;
}

}  // namespace

EnvState reset_state(const EnvConfig& config, Rng& rng) {
  config.validate();
  EnvState s;
  s.config = config;
  const int n = config.ue_count_range[uniform_index(rng, config.ue_count_range.size())];
  // With churn enabled the id space covers the whole range so ids stay stable.
  s.slot_count = config.mid_episode_dynamics ? config.max_ue_count() : n;
  s.ues.resize(static_cast<std::size_t>(s.slot_count));
  for (int i = 0; i < s.slot_count; ++i) {
    s.ues[i].ue_id = i + 1;
    s.ues[i].active = i < n;
  }
  return s;
}

std::vector<int> generate_arrivals(EnvState& state, Rng& rng) {
  std::vector<int> flags;
  for (auto& ue : state.ues) {
    if (!ue.active) continue;
    const bool gen = bernoulli(rng, state.config.arrival_prob);
    flags.push_back(gen ? 1 : 0);
    if (!gen) continue;
    const std::uint64_t id = state.next_pdu_id++;
    if (static_cast<int>(ue.buffer.size()) >= state.config.buffer_capacity) {
      state.log.push_back({state.slot, EventType::kOverflow, ue.ue_id, id, false});
    } else {
      ue.buffer.push_back({id, state.slot, false});
      state.log.push_back({state.slot, EventType::kGenerate, ue.ue_id, id, false});
    }
  }
  return flags;
}

ChannelState resolve_channel(std::span<const int> transmitters, int slot_count,
                             double tbler, Rng& rng) {
  if (transmitters.empty()) return {0, false};
  if (transmitters.size() >= 2) return {slot_count + 1, false};
  return {transmitters.front(), !bernoulli(rng, tbler)};
}

namespace {

void validate_action(const EnvState& state, const JointAction& action) {
  const auto n = static_cast<std::size_t>(state.active_count());
  if (action.ue_actions.size() != n || action.bs_dcms.size() != n) {
    throw ContractError("joint action covers " + std::to_string(action.ue_actions.size()) +
                        " UEs / " + std::to_string(action.bs_dcms.size()) +
                        " DCMs but " + std::to_string(n) + " UEs are active");
  }
  for (const auto& a : action.ue_actions) {
    const int phy = static_cast<int>(a.phy);
    if (phy < 0 || phy >= kPhyActionCount) throw ContractError("phy action out of range");
    if (a.ucm < 1 || a.ucm > state.config.ucm_vocab_size) throw ContractError("UCM out of range");
  }
  for (int d : action.bs_dcms) {
    if (d < 1 || d > state.config.dcm_vocab_size) throw ContractError("DCM out of range");
  }
}

}  // namespace

StepOutcome step(EnvState& state, const JointAction& action, Rng& rng) {
  if (state.done()) throw StateError("step called on a finished episode");
  validate_action(state, action);

  const auto log_begin = state.log.size();
  const double rho = state.config.reward_const;
  const int t = state.slot;
  StepOutcome out;

  // Arrivals first so a dPDU generated this slot can be acted upon.
  generate_arrivals(state, rng);

  // UE physical actions. Transmit keeps the dPDU queued; only Delete dequeues.
  std::vector<int> transmitters;
  std::vector<std::size_t> active_index;
  for (std::size_t i = 0; i < state.ues.size(); ++i) {
    if (state.ues[i].active) active_index.push_back(i);
  }
  int bad_deletes = 0;
  for (std::size_t k = 0; k < active_index.size(); ++k) {
    UeState& ue = state.ues[active_index[k]];
    const UeAction& a = action.ue_actions[k];
    if (ue.buffer.empty()) continue;
    if (a.phy == PhyAction::kTransmit) {
      transmitters.push_back(ue.ue_id);
      state.log.push_back({t, EventType::kTransmit, ue.ue_id, ue.buffer.front().id,
                           ue.buffer.front().received});
    } else if (a.phy == PhyAction::kDelete) {
      const DPdu head = ue.buffer.front();
      ue.buffer.pop_front();
      if (!head.received) ++bad_deletes;
      state.log.push_back({t, EventType::kDelete, ue.ue_id, head.id, head.received});
    }
  }

  // Deletions happen before the channel resolves, but a transmitting UE never
  // deletes in the same slot, so the transmitted head is still queued.
  out.channel = resolve_channel(transmitters, state.slot_count, state.config.tbler, rng);
  if (out.channel.x == state.slot_count + 1) {
    state.log.push_back({t, EventType::kCollision, 0, 0, false});
  } else if (out.channel.x >= 1) {
    UeState& ue = state.ues[static_cast<std::size_t>(out.channel.x - 1)];
    DPdu& head = ue.buffer.front();
    if (!out.channel.delivered) {
      state.log.push_back({t, EventType::kErasure, ue.ue_id, head.id, head.received});
    } else if (!head.received) {
      head.received = true;
      out.received_flag = 1;
      state.log.push_back({t, EventType::kDeliver, ue.ue_id, head.id, true});
    } else {
      state.log.push_back({t, EventType::kRedeliver, ue.ue_id, head.id, true});
    }
  }

  out.reward = rho * out.received_flag - rho * bad_deletes;

  for (std::size_t k = 0; k < active_index.size(); ++k) {
    UeState& ue = state.ues[active_index[k]];
    ue.last_action = action.ue_actions[k];
    ue.last_dcm = action.bs_dcms[k];
    ue.acted = true;
  }
  state.last_channel = out.channel.x;

  if (state.config.mid_episode_dynamics) apply_population_dynamics(state, rng);

  state.rewards.push_back(out.reward);
  ++state.slot;
  out.done = state.done();
  out.next_ue_obs = observe_ues(state);
  out.next_bs_obs = observe_bs(state);
  out.events.assign(state.log.begin() + static_cast<std::ptrdiff_t>(log_begin), state.log.end());
  return out;
}

void apply_population_dynamics(EnvState& state, Rng& rng) {
  if (!state.config.mid_episode_dynamics) return;
  if (!bernoulli(rng, state.config.churn_prob)) return;
  const bool join = bernoulli(rng, 0.5);
  const int active = state.active_count();
  if (join) {
    if (active >= state.config.max_ue_count()) return;
    for (auto& ue : state.ues) {
      if (ue.active) continue;
      fresh_ue(ue);
      ue.active = true;
      state.log.push_back({state.slot, EventType::kActivate, ue.ue_id, 0, false});
      return;
    }
  } else {
    if (active <= state.config.min_ue_count()) return;
    const auto ids = state.active_ue_ids();
    UeState& ue = state.ues[static_cast<std::size_t>(ids[uniform_index(rng, ids.size())] - 1)];
    for (const auto& p : ue.buffer) {
      state.log.push_back({state.slot, EventType::kDepartPdu, ue.ue_id, p.id, p.received});
    }
    fresh_ue(ue);
    ue.active = false;
    state.log.push_back({state.slot, EventType::kDepart, ue.ue_id, 0, false});
  }
}

double episode_return(std::span<const double> rewards, double gamma) {
  double g = 0.0;
  double w = 1.0;
  for (double r : rewards) {
    g += w * r;
    w *= gamma;
  }
  return g;
}

std::vector<UeObs> observe_ues(const EnvState& state) {
  std::vector<UeObs> out;
  for (const auto& ue : state.ues) {
    if (!ue.active) continue;
    out.push_back({ue.ue_id, static_cast<int>(ue.buffer.size()), ue.last_action, ue.last_dcm});
  }
  return out;
}

BsObs observe_bs(const EnvState& state) {
  BsObs obs;
  obs.channel = state.last_channel;
  obs.slot_count = state.slot_count;
  for (const auto& ue : state.ues) {
    if (!ue.active) continue;
    obs.per_ue.push_back({ue.ue_id, ue.acted ? ue.last_action.ucm : kNoMessage,
                          ue.acted ? ue.last_dcm : kNoMessage});
  }
  return obs;
}

UdtsEnv::UdtsEnv(EnvConfig config) {
  config.validate();
  state_.config = std::move(config);
}

void UdtsEnv::reset(std::uint64_t seed) {
  rng_.seed(seed);
  state_ = reset_state(state_.config, rng_);
  ue_obs_ = observe_ues(state_);
  bs_obs_ = observe_bs(state_);
  initialized_ = true;
}

StepOutcome UdtsEnv::step(const JointAction& action) {
  if (!initialized_) throw StateError("step called before reset");
  auto out = env::step(state_, action, rng_);
  ue_obs_ = out.next_ue_obs;
  bs_obs_ = out.next_bs_obs;
  return out;
}

double throughput(const std::vector<Event>& events, int episode_length) {
  if (episode_length <= 0) return 0.0;
  std::int64_t slots_with_rx = 0;
  for (const auto& e : events) {
    if (e.type == EventType::kDeliver) ++slots_with_rx;
  }
  return static_cast<double>(slots_with_rx) / episode_length;
}

}  // namespace macforge::env
