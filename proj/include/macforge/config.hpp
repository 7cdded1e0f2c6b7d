#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace macforge {

// Parameters of the slotted uplink scheduling game (N in {2..5}, |B|=15,
// T=24, p_a=0.48 by default).
struct EnvConfig {
  std::vector<int> ue_count_range{2, 3, 4, 5};
  int buffer_capacity = 15;
  int episode_length = 24;
  double arrival_prob = 0.48;
  double reward_const = 1.5;
  int ucm_vocab_size = 2;
  int dcm_vocab_size = 3;
  double tbler = 1e-3;
  double discount = 0.99;
  // Opt-in UE churn inside an episode. When off, N is drawn once per reset.
  bool mid_episode_dynamics = false;
  double churn_prob = 0.05;

  void validate() const;
  int min_ue_count() const;
  int max_ue_count() const;
};

// Token scorer (actor) shape.
struct ModelConfig {
  int embed_dim = 16;
  int hidden_dim = 64;
  int layers = 2;
  double init_scale = 0.2;

  void validate() const;
};

struct CriticConfig {
  int embed_dim = 16;
  int hidden_dim = 32;
  int layers = 1;
  int mlp_hidden = 32;
  double init_scale = 0.2;

  void validate() const;
};

struct PpoConfig {
  double clip_eps = 0.2;
  double value_clip_eps = 0.2;
  double gamma = 0.99;
  double gae_lambda = 0.9;
  double kl_coef = 0.2;
  double entropy_coef = 0.01;
  int epochs_per_batch = 4;
  int minibatch_size = 256;
  double actor_lr = 3e-3;
  double critic_lr = 3e-3;
  double max_grad_norm = 0.5;
  int rollout_episodes_per_update = 16;
  int total_updates = 3000;
  bool normalize_advantages = true;

  void validate() const;
};

struct FusionConfig {
  bool enabled = false;
  double epsilon = 1.0;

  void validate() const;
};

struct PromptConfig {
  bool sie_enabled = true;
};

struct BaselineConfig {
  double nocomm_transmit_prob = 0.5;
  int nocomm_delete_threshold = 1;

  void validate() const;
};

struct HarnessConfig {
  int eval_every = 10;
  int eval_episodes = 100;
  int checkpoint_every = 50;
  bool greedy_eval = true;
  // Empty means "every N in env.ue_count_range".
  std::vector<int> eval_ue_counts;
  int latency_samples = 1000;
  int latency_warmup = 100;
  // Launch command for an external scorer process (empty = none).
  std::string bridge_command;

  void validate() const;
};

struct ExperimentConfig {
  EnvConfig env;
  ModelConfig model;
  CriticConfig critic;
  PpoConfig ppo;
  FusionConfig fusion;
  PromptConfig prompt;
  BaselineConfig baseline;
  HarnessConfig harness;
  std::uint64_t seed = 1;

  void validate() const;

  // Set one "section.key" entry from its text form. Throws ConfigError on an
  // unknown key or unparsable value.
  void set(const std::string& key, const std::string& value);

  // Every settable key with its current value, in a stable order.
  std::map<std::string, std::string> to_key_values() const;

  std::string to_text() const;
};

// Reads "section.key = value" lines; '#' starts a comment.
ExperimentConfig load_config_file(const std::filesystem::path& path);
ExperimentConfig parse_config_text(const std::string& text,
                                   ExperimentConfig base = {});

std::vector<int> parse_int_list(const std::string& text);

}  // namespace macforge
