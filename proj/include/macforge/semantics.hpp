#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "macforge/config.hpp"
#include "macforge/env.hpp"

namespace macforge::semantics {

using TokenId = int;

enum class AgentKind { kUe, kBs };

// Closed word-level vocabulary; token id = position in `tokens()`.
class Vocabulary {
 public:
  static constexpr std::string_view kNone = "<none>";
  static constexpr std::string_view kRole = "<Role>";
  static constexpr std::string_view kTarget = "<Target>";
  static constexpr std::string_view kActionCandidate = "<Action candidate>";
  static constexpr std::string_view kSep = "<sep>";
  static constexpr std::string_view kInactive = "<inactive>";
  static constexpr std::string_view kHeader = "macforge-vocab/1";

  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> tokens);

  // Every token the templates can emit for this configuration.
  static Vocabulary for_config(const EnvConfig& config);

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::string& token(TokenId id) const;
  TokenId id(std::string_view token) const;  // throws EncodingError
  bool contains(std::string_view token) const;
  std::uint64_t hash() const;

  std::string render(const std::vector<TokenId>& ids) const;  // space-joined

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

struct Prompt {
  std::vector<TokenId> token_ids;
  AgentKind agent_kind = AgentKind::kUe;
  int ue_index = 0;
};

struct LinguisticAction {
  std::vector<TokenId> surface;
  AgentKind kind = AgentKind::kUe;
  env::UeAction ue_action;  // meaningful for kUe
  int dcm = 0;              // meaningful for kBs

  bool operator==(const LinguisticAction&) const = default;
};

struct Role {
  AgentKind kind = AgentKind::kUe;
  int ue_index = 0;
};

// The mapping set f: numeric observations/actions to token sequences and the
// role/target/candidate prompt blocks.
class SemanticMapper {
 public:
  explicit SemanticMapper(EnvConfig config);
  SemanticMapper(EnvConfig config, Vocabulary vocab);

  const Vocabulary& vocabulary() const { return vocab_; }
  const EnvConfig& config() const { return config_; }

  std::vector<TokenId> encode_ue_observation(const env::UeObs& obs) const;
  std::vector<TokenId> encode_bs_observation(const env::BsObs& obs) const;

  Prompt assemble_sie_prompt(const std::vector<TokenId>& obs_tokens, Role role,
                             std::string_view target,
                             const std::vector<LinguisticAction>& candidates,
                             bool sie_enabled) const;

  // UE: all (phy, ucm) pairs phy-major; BS: d1..dD.
  const std::vector<LinguisticAction>& enumerate_actions(AgentKind kind) const;
  LinguisticAction decode_action(const std::vector<TokenId>& surface, AgentKind kind) const;
  LinguisticAction decode_action(const LinguisticAction& a) const {
    return decode_action(a.surface, a.kind);
  }

  static std::string_view default_target(AgentKind kind);

  Prompt ue_prompt(const env::UeObs& obs, bool sie_enabled) const;
  Prompt bs_prompt(const env::BsObs& obs, int ue_id, bool sie_enabled) const;

  // Critic input: UE prompts for ids 1..max N (<inactive> for absent ones),
  // each followed by <sep>, then the BS observation and its SIE block.
  std::vector<TokenId> joint_prompt(const std::vector<env::UeObs>& ue_obs,
                                    const env::BsObs& bs_obs, bool sie_enabled) const;

  std::vector<TokenId> tokenize(std::string_view text) const;

 private:
  void build_candidates();
  TokenId phy_token(env::PhyAction a) const;

  EnvConfig config_;
  Vocabulary vocab_;
  std::vector<LinguisticAction> ue_candidates_;
  std::vector<LinguisticAction> bs_candidates_;
};

}  // namespace macforge::semantics
