#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "macforge/config.hpp"
#include "macforge/critic.hpp"
#include "macforge/scorer.hpp"
#include "macforge/semantics.hpp"

namespace macforge::checkpoint {

inline constexpr char kMagic[8] = {'M', 'A', 'C', 'F', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kVersion = 1;

struct Checkpoint {
  std::string config_text;
  std::uint64_t vocab_hash = 0;
  std::int64_t update = 0;
  std::vector<double> actor_params;
  std::vector<double> critic_params;
};

void save(const std::filesystem::path& path, const Checkpoint& ckpt);

// Throws CheckpointError on a bad magic/version, truncation, or when
// `expected_vocab_hash` is given and differs.
Checkpoint load(const std::filesystem::path& path,
                std::optional<std::uint64_t> expected_vocab_hash = std::nullopt);

// A checkpoint rebuilt into runnable models.
struct LoadedPolicy {
  ExperimentConfig config;
  semantics::SemanticMapper mapper;
  model::SequenceScorer actor;
  model::Critic critic;
  std::int64_t update = 0;
};

// The vocabulary is rebuilt from the stored config and must hash to the
// stored value.
LoadedPolicy load_policy(const std::filesystem::path& path);

Checkpoint capture(const ExperimentConfig& config, const semantics::Vocabulary& vocab,
                   const model::SequenceScorer& actor, const model::Critic& critic,
                   std::int64_t update);

}  // namespace macforge::checkpoint
