#pragma once

#include <map>
#include <string>

#include "macforge/agents.hpp"

namespace macforge::baselines {

// Fixed message meanings of the hand-written grant protocol.
inline constexpr int kUcmIdle = 1;
inline constexpr int kUcmSchedulingRequest = 2;
inline constexpr int kDcmNone = 1;
inline constexpr int kDcmGrant = 2;
inline constexpr int kDcmAck = 3;

// Grant/ACK protocol. UEs with queued, not-yet-transmitted dPDUs raise a
// scheduling request; the BS grants one requester per slot (lowest id,
// skipping the UE granted last slot and the UE being acknowledged), ACKs
// whichever UE it saw alone on the channel, and a UE deletes its head-of-line
// dPDU only on ACK.
class HumanCrafted : public agents::DecisionMaker {
 public:
  explicit HumanCrafted(const EnvConfig& config);

  void reset(std::uint64_t seed) override;
  env::JointAction act(const std::vector<env::UeObs>& ue_obs, const env::BsObs& bs_obs) override;
  std::string name() const override { return "human"; }

  env::UeAction ue_act(const env::UeObs& obs);
  int bs_act(const env::BsObs& obs, int ue_id) const;

 private:
  int grant_target(const env::BsObs& obs) const;
  std::map<int, int> awaiting_ack_;
};

// No signaling: constant control messages, random access with probability
// `transmit_prob`, and deletion once a dPDU has been sent more than
// `delete_threshold` times.
class NoComm : public agents::DecisionMaker {
 public:
  NoComm(const EnvConfig& config, const BaselineConfig& baseline);

  void reset(std::uint64_t seed) override;
  env::JointAction act(const std::vector<env::UeObs>& ue_obs, const env::BsObs& bs_obs) override;
  std::string name() const override { return "nocomm"; }

 private:
  BaselineConfig baseline_;
  Rng rng_;
  std::map<int, int> attempts_;
};

}  // namespace macforge::baselines
