#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "macforge/agents.hpp"
#include "macforge/config.hpp"
#include "macforge/critic.hpp"
#include "macforge/env.hpp"
#include "macforge/scorer.hpp"
#include "macforge/semantics.hpp"

namespace macforge::ppo {

// R_t = r_t + gamma * R_{t+1}, R_T = 0.
std::vector<double> reward_to_go(std::span<const double> rewards, double gamma);

// `values` carries one bootstrap entry past the last reward (0 at episode
// end). A_t = delta_t + gamma * lambda * A_{t+1}.
std::vector<double> compute_gae(std::span<const double> rewards, std::span<const double> values,
                                double gamma, double lambda);

// In-place zero-mean / unit-variance; constant inputs become all zeros.
void normalize(std::vector<double>& xs);

struct CriticTerm {
  double loss = 0.0;
  double d_value = 0.0;  // dloss/dV
};

// max[(V - R)^2, (clip(V, V_old - eps, V_old + eps) - R)^2]
CriticTerm critic_term(double value, double value_old, double ret, double clip_eps);
double critic_loss(std::span<const double> values, std::span<const double> values_old,
                   std::span<const double> returns, double clip_eps);

struct ActorTerm {
  double objective = 0.0;
  double surrogate = 0.0;
  double kl = 0.0;       // KL(pi_old || pi)
  double entropy = 0.0;  // H(pi)
  double ratio = 1.0;
  bool clipped = false;
  std::vector<double> d_probs;  // dobjective/dpi
};

// min(eta A, clip(eta, 1-eps, 1+eps) A) - kl_coef KL(pi_old||pi) + entropy_coef H(pi)
ActorTerm actor_term(std::span<const double> probs, std::span<const double> old_probs,
                     std::size_t chosen, double advantage, const PpoConfig& config);

struct ActorSample {
  std::vector<double> probs;
  std::vector<double> old_probs;
  std::size_t chosen = 0;
  double advantage = 0.0;
};
double actor_objective(std::span<const ActorSample> samples, const PpoConfig& config);

struct AgentRecord {
  semantics::Prompt prompt;
  std::size_t chosen = 0;
  double logprob = 0.0;
  std::vector<double> probs;  // behavior distribution at collection time
};

struct TransitionRecord {
  std::vector<semantics::TokenId> joint_prompt;
  std::vector<AgentRecord> ue;
  std::vector<AgentRecord> bs;
  double reward = 0.0;
  double value = 0.0;
  double advantage = 0.0;
  double ret = 0.0;
};

struct Episode {
  std::vector<TransitionRecord> records;
  std::vector<env::Event> events;
  double episode_return = 0.0;
  double throughput = 0.0;
  int ue_count = 0;
};

class Adam {
 public:
  Adam() = default;
  Adam(std::size_t n, double lr) : lr_(lr), m_(n, 0.0), v_(n, 0.0) {}
  void step(std::span<double> params, std::span<const double> grad);
  double lr() const { return lr_; }
  std::int64_t steps() const { return t_; }

 private:
  double lr_ = 1e-3;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  std::int64_t t_ = 0;
  std::vector<double> m_, v_;
};

struct EpochStats {
  double actor_objective = 0.0;
  double critic_loss = 0.0;
  double mean_kl = 0.0;
  double mean_entropy = 0.0;
  double clip_fraction = 0.0;
};

struct UpdateStats {
  std::int64_t update = 0;
  double mean_return = 0.0;
  double mean_throughput = 0.0;
  std::vector<EpochStats> epochs;
  double wallclock_ms = 0.0;
};

class PpoTrainer {
 public:
  PpoTrainer(const ExperimentConfig& config, model::SequenceScorer& actor, model::Critic& critic,
             const semantics::SemanticMapper& mapper);

  // One episode from a freshly reset environment, sampling from the current
  // policy. Values are computed once here.
  Episode collect_rollout(env::UdtsEnv& env, Rng& rng);

  // Fills reward-to-go and advantages (normalized across the batch when
  // configured).
  void finalize(std::vector<Episode>& batch) const;

  // epochs_per_batch passes of minibatch gradient steps.
  UpdateStats update(std::vector<Episode>& batch, Rng& rng);

  // Collect + update `updates` times. `on_update` runs after every update.
  void train(int updates, std::int64_t first_update,
             const std::function<void(const UpdateStats&)>& on_update);

  // Gradient of the mean minibatch loss (negated actor objective and critic
  // loss) with respect to actor and critic parameters. Exposed for gradient
  // checks; `update` uses it internally.
  EpochStats loss_gradients(const std::vector<const TransitionRecord*>& minibatch,
                            std::vector<double>& actor_grad, std::vector<double>& critic_grad,
                            double* total_loss = nullptr) const;

  agents::ScratchSource& source() { return source_; }
  std::int64_t episodes_collected() const { return episodes_; }

 private:
  ExperimentConfig config_;
  model::SequenceScorer& actor_;
  model::Critic& critic_;
  const semantics::SemanticMapper& mapper_;
  agents::ScratchSource source_;
  Adam actor_opt_;
  Adam critic_opt_;
  std::int64_t episodes_ = 0;
};

// Scales `grad` down so that its L2 norm is at most `max_norm`; returns the
// norm before clipping.
double clip_grad_norm(std::vector<double>& grad, double max_norm);

}  // namespace macforge::ppo
