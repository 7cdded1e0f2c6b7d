#include "macforge/baselines.hpp"

#include "macforge/error.hpp"

namespace macforge::baselines {

HumanCrafted::HumanCrafted(const EnvConfig& config) {
  if (config.ucm_vocab_size < 2 || config.dcm_vocab_size < 3) {
    throw ConfigError("the grant protocol needs U >= 2 and D >= 3");
  }
}

void HumanCrafted::reset(std::uint64_t /*seed*/) { awaiting_ack_.clear(); }

env::UeAction HumanCrafted::ue_act(const env::UeObs& obs) {
  // Slots since an unacknowledged transmission (0 = none outstanding). The
  // ACK for a transmission in slot t is visible at t + 2.
  int& wait = awaiting_ack_[obs.ue_id];
  if (obs.prev_dcm == env::kNoMessage) wait = 0;  // fresh UE
  if (wait > 0) ++wait;

  env::UeAction a{env::PhyAction::kDoNothing, kUcmIdle};
  int pending = obs.buffer_len;
  if (wait > 0 && obs.prev_dcm == kDcmAck) {
    a.phy = env::PhyAction::kDelete;
    wait = 0;
    --pending;
  } else if (wait > 2) {
    wait = 0;  // erased; request again
  }
  if (wait == 0 && a.phy == env::PhyAction::kDoNothing && obs.prev_dcm == kDcmGrant &&
      obs.buffer_len > 0) {
    a.phy = env::PhyAction::kTransmit;
    wait = 1;
  }
  if (wait > 0) --pending;
  if (pending > 0) a.ucm = kUcmSchedulingRequest;
  return a;
}

int HumanCrafted::grant_target(const env::BsObs& obs) const {
  const bool single = obs.channel >= 1 && obs.channel <= obs.slot_count;
  for (const auto& m : obs.per_ue) {
    if (m.ucm != kUcmSchedulingRequest) continue;
    if (m.prev_dcm == kDcmGrant) continue;  // transmitting this slot
    if (single && m.ue_id == obs.channel) continue;  // receives the ACK instead
    return m.ue_id;
  }
  return 0;
}

int HumanCrafted::bs_act(const env::BsObs& obs, int ue_id) const {
  if (obs.channel >= 1 && obs.channel <= obs.slot_count && obs.channel == ue_id) return kDcmAck;
  if (grant_target(obs) == ue_id) return kDcmGrant;
  return kDcmNone;
}

env::JointAction HumanCrafted::act(const std::vector<env::UeObs>& ue_obs, const env::BsObs& bs_obs) {
  env::JointAction a;
  for (const auto& o : ue_obs) a.ue_actions.push_back(ue_act(o));
  for (const auto& o : ue_obs) a.bs_dcms.push_back(bs_act(bs_obs, o.ue_id));
  return a;
}

NoComm::NoComm(const EnvConfig& /*config*/, const BaselineConfig& baseline) : baseline_(baseline) {
  baseline.validate();
}

void NoComm::reset(std::uint64_t seed) {
  rng_.seed(seed);
  attempts_.clear();
}

env::JointAction NoComm::act(const std::vector<env::UeObs>& ue_obs, const env::BsObs& /*bs_obs*/) {
  env::JointAction a;
  for (const auto& o : ue_obs) {
    int& tries = attempts_[o.ue_id];
    if (o.prev_dcm == env::kNoMessage) tries = 0;
    env::UeAction u{env::PhyAction::kDoNothing, 1};
    if (o.buffer_len > 0) {
      if (tries > baseline_.nocomm_delete_threshold) {
        u.phy = env::PhyAction::kDelete;
        tries = 0;
      } else if (bernoulli(rng_, baseline_.nocomm_transmit_prob)) {
        u.phy = env::PhyAction::kTransmit;
        ++tries;
      }
    }
    a.ue_actions.push_back(u);
    a.bs_dcms.push_back(1);
  }
  return a;
}

}  // namespace macforge::baselines
