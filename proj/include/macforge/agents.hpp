#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "macforge/config.hpp"
#include "macforge/env.hpp"
#include "macforge/policy.hpp"
#include "macforge/scorer.hpp"
#include "macforge/semantics.hpp"

namespace macforge::agents {

struct DecisionStats {
  std::int64_t decisions = 0;
  std::int64_t invalid = 0;
};

// Common interface of everything that can drive the environment: the learned
// token policy, the bridge-backed policy and the hand-written baselines.
class DecisionMaker {
 public:
  virtual ~DecisionMaker() = default;
  virtual void reset(std::uint64_t seed) = 0;
  virtual env::JointAction act(const std::vector<env::UeObs>& ue_obs, const env::BsObs& bs_obs) = 0;
  virtual std::string name() const = 0;
  virtual DecisionStats stats() const { return {}; }
};

// Produces candidate sequence log-probabilities for a prompt. nullopt means
// the source failed to give a usable answer.
class CandidateSource {
 public:
  virtual ~CandidateSource() = default;
  virtual std::optional<std::vector<double>> score(
      const semantics::Prompt& prompt, const std::vector<semantics::LinguisticAction>& candidates) = 0;
};

struct TokenVectorHash {
  std::size_t operator()(const std::vector<semantics::TokenId>& v) const noexcept;
};

// In-process scorer. Memoizes prompt scores while parameters are frozen; call
// clear_cache() after every parameter update.
class ScratchSource : public CandidateSource {
 public:
  explicit ScratchSource(const model::SequenceScorer& scorer, bool use_cache = true)
      : scorer_(scorer), use_cache_(use_cache) {}

  std::optional<std::vector<double>> score(
      const semantics::Prompt& prompt,
      const std::vector<semantics::LinguisticAction>& candidates) override;
  void clear_cache() { cache_.clear(); }

 private:
  const model::SequenceScorer& scorer_;
  bool use_cache_;
  std::unordered_map<std::vector<semantics::TokenId>, std::vector<double>, TokenVectorHash> cache_;
};

struct AgentDecision {
  semantics::Prompt prompt;
  std::vector<double> probs;  // distribution actually sampled from
  std::size_t chosen = 0;
  double logprob = 0.0;
  bool valid = true;
};

struct SlotDecision {
  std::vector<AgentDecision> ue;  // aligned with active UEs
  std::vector<AgentDecision> bs;  // one per active UE
  env::JointAction action;
};

// Builds every agent's SIE prompt, scores candidates, optionally fuses within
// each agent class and samples (or takes argmax when greedy).
SlotDecision decide_slot(CandidateSource& source, const semantics::SemanticMapper& mapper,
                         const std::vector<env::UeObs>& ue_obs, const env::BsObs& bs_obs,
                         const PromptConfig& prompt, const FusionConfig& fusion, Rng& rng,
                         bool greedy);

class TokenPolicy : public DecisionMaker {
 public:
  TokenPolicy(std::shared_ptr<CandidateSource> source, const semantics::SemanticMapper& mapper,
              PromptConfig prompt, FusionConfig fusion, bool greedy, std::string name);

  void reset(std::uint64_t seed) override;
  env::JointAction act(const std::vector<env::UeObs>& ue_obs, const env::BsObs& bs_obs) override;
  std::string name() const override { return name_; }
  DecisionStats stats() const override { return stats_; }

 private:
  std::shared_ptr<CandidateSource> source_;
  const semantics::SemanticMapper& mapper_;
  PromptConfig prompt_;
  FusionConfig fusion_;
  bool greedy_;
  std::string name_;
  Rng rng_;
  DecisionStats stats_;
};

}  // namespace macforge::agents
