#pragma once

#include <span>
#include <utility>
#include <vector>

#include "macforge/config.hpp"
#include "macforge/rng.hpp"
#include "macforge/scorer.hpp"
#include "macforge/semantics.hpp"

namespace macforge::policy {

using semantics::LinguisticAction;

struct ActionDistribution {
  std::vector<LinguisticAction> candidates;
  std::vector<double> probs;
  std::vector<double> logprobs;
};

// Sequence log-probability of each candidate under the scorer.
std::vector<double> score_candidates(const model::SequenceScorer& scorer,
                                     const semantics::Prompt& prompt,
                                     const std::vector<LinguisticAction>& candidates);

// Max-subtracted softmax over candidate sequence log-probabilities.
// Throws ContractError when no candidate has finite log-probability.
std::vector<double> softmax(std::span<const double> seq_logprobs);
ActionDistribution action_distribution(std::span<const double> seq_logprobs,
                                       std::vector<LinguisticAction> candidates = {});

// KL(p || q) over a finite support; 0 * log 0 terms vanish.
double kl_divergence(std::span<const double> p, std::span<const double> q);
double entropy(std::span<const double> p);

struct FusionResult {
  std::vector<double> probs;
  std::vector<double> weights;  // consensus factors exp(-eps * KL(pi_e || pi_avg))
  std::vector<double> kl;       // KL(pi_e || pi_avg)
};

// Consensus-weighted mixture of same-support distributions.
FusionResult fuse(const std::vector<std::vector<double>>& inputs, double epsilon);
ActionDistribution fuse_policies(const std::vector<ActionDistribution>& inputs,
                                 const FusionConfig& config);

// dL/d(input probs) given dL/d(fused probs).
std::vector<std::vector<double>> fuse_backward(const std::vector<std::vector<double>>& inputs,
                                               double epsilon, std::span<const double> d_fused);

// dL/d(logits) from dL/d(probs) for p = softmax(logits).
std::vector<double> softmax_backward(std::span<const double> probs, std::span<const double> d_probs);

struct Sample {
  std::size_t index = 0;
  double logprob = 0.0;
};

// Greedy mode takes the argmax; ties go to the lowest index.
Sample sample_index(std::span<const double> probs, Rng& rng, bool greedy);
std::pair<LinguisticAction, double> sample_action(const ActionDistribution& dist, Rng& rng,
                                                  bool greedy = false);

}  // namespace macforge::policy
