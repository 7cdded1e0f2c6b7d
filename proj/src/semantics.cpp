#include "macforge/semantics.hpp"

#include <fstream>
#include <sstream>

#include "macforge/error.hpp"

namespace macforge::semantics {

namespace {

constexpr std::string_view kUeTarget = "deliver buffered dpdu without collision";
constexpr std::string_view kBsTarget = "schedule and acknowledge uplink dpdu";

}  // namespace

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<TokenId>(i)).second) {
      throw EncodingError("duplicate token '" + tokens_[i] + "' in vocabulary");
    }
  }
  for (auto special : {kNone, kRole, kTarget, kActionCandidate, kSep, kInactive}) {
    if (!contains(special)) {
      throw EncodingError("vocabulary lacks special token " + std::string(special));
    }
  }
}

Vocabulary Vocabulary::for_config(const EnvConfig& config) {
  config.validate();
  std::vector<std::string> t;
  for (auto s : {kNone, kRole, kTarget, kActionCandidate, kSep, kInactive}) t.emplace_back(s);
  for (auto w : {"buffer", "last", "downlink", "channel", "idle", "collision", "user", "bs",
                 "with", "wait", "transmit", "delete", "deliver", "buffered", "dpdu",
                 "without", "schedule", "and", "acknowledge", "uplink"}) {
    t.emplace_back(w);
  }
  for (int b = 0; b <= config.buffer_capacity; ++b) t.push_back("b" + std::to_string(b));
  for (int n = 1; n <= config.max_ue_count(); ++n) t.push_back("ue" + std::to_string(n));
  for (int u = 1; u <= config.ucm_vocab_size; ++u) t.push_back("u" + std::to_string(u));
  for (int d = 1; d <= config.dcm_vocab_size; ++d) t.push_back("d" + std::to_string(d));
  return Vocabulary(std::move(t));
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw EncodingError("token id " + std::to_string(id) + " outside vocabulary");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

TokenId Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) throw EncodingError("token '" + std::string(token) + "' not in vocabulary");
  return it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return index_.count(std::string(token)) != 0;
}

std::uint64_t Vocabulary::hash() const {
  // FNV-1a over the newline-joined token list.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& tok : tokens_) {
    for (unsigned char c : tok) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    h ^= '\n';
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string Vocabulary::render(const std::vector<TokenId>& ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += token(ids[i]);
  }
  return out;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw EncodingError("cannot write vocabulary to " + path.string());
  out << kHeader << ' ' << tokens_.size() << '\n';
  for (const auto& tok : tokens_) out << tok << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw EncodingError("cannot read vocabulary from " + path.string());
  std::string header;
  std::getline(in, header);
  std::istringstream hs(header);
  std::string magic;
  std::size_t count = 0;
  if (!(hs >> magic >> count) || magic != kHeader) {
    throw EncodingError("vocabulary file has a bad header: '" + header + "'");
  }
  std::vector<std::string> tokens;
  std::string line;
  while (tokens.size() < count && std::getline(in, line)) tokens.push_back(line);
  if (tokens.size() != count) throw EncodingError("vocabulary file is truncated");
  return Vocabulary(std::move(tokens));
}

SemanticMapper::SemanticMapper(EnvConfig config)
    : SemanticMapper(config, Vocabulary::for_config(config)) {}

SemanticMapper::SemanticMapper(EnvConfig config, Vocabulary vocab)
    : config_(std::move(config)), vocab_(std::move(vocab)) {
  config_.validate();
  build_candidates();
}

TokenId SemanticMapper::phy_token(env::PhyAction a) const {
  switch (a) {
    case env::PhyAction::kDoNothing: return vocab_.id("wait");
    case env::PhyAction::kTransmit: return vocab_.id("transmit");
    case env::PhyAction::kDelete: return vocab_.id("delete");
  }
  throw EncodingError("phy action out of range");
}

void SemanticMapper::build_candidates() {
  for (int p = 0; p < env::kPhyActionCount; ++p) {
    for (int u = 1; u <= config_.ucm_vocab_size; ++u) {
      LinguisticAction a;
      a.kind = AgentKind::kUe;
      a.ue_action = {static_cast<env::PhyAction>(p), u};
      a.surface = {phy_token(a.ue_action.phy), vocab_.id("u" + std::to_string(u))};
      ue_candidates_.push_back(std::move(a));
    }
  }
  for (int d = 1; d <= config_.dcm_vocab_size; ++d) {
    LinguisticAction a;
    a.kind = AgentKind::kBs;
    a.dcm = d;
    a.surface = {vocab_.id("d" + std::to_string(d))};
    bs_candidates_.push_back(std::move(a));
  }
}

std::vector<TokenId> SemanticMapper::encode_ue_observation(const env::UeObs& obs) const {
  if (obs.buffer_len < 0 || obs.buffer_len > config_.buffer_capacity) {
    throw EncodingError("buffer length " + std::to_string(obs.buffer_len) + " out of range");
  }
  const int phy = static_cast<int>(obs.prev_action.phy);
  if (phy < 0 || phy >= env::kPhyActionCount) throw EncodingError("phy action out of range");
  if (obs.prev_action.ucm < 1 || obs.prev_action.ucm > config_.ucm_vocab_size) {
    throw EncodingError("UCM out of range");
  }
  if (obs.prev_dcm < 0 || obs.prev_dcm > config_.dcm_vocab_size) {
    throw EncodingError("DCM out of range");
  }
  return {vocab_.id("buffer"),
          vocab_.id("b" + std::to_string(obs.buffer_len)),
          vocab_.id("last"),
          phy_token(obs.prev_action.phy),
          vocab_.id("u" + std::to_string(obs.prev_action.ucm)),
          vocab_.id("downlink"),
          obs.prev_dcm == env::kNoMessage ? vocab_.id(Vocabulary::kNone)
                                          : vocab_.id("d" + std::to_string(obs.prev_dcm))};
}

std::vector<TokenId> SemanticMapper::encode_bs_observation(const env::BsObs& obs) const {
  if (obs.slot_count < 0 || obs.slot_count > config_.max_ue_count()) {
    throw EncodingError("slot count out of range");
  }
  std::vector<TokenId> out{vocab_.id("channel")};
  if (obs.channel == 0) {
    out.push_back(vocab_.id("idle"));
  } else if (obs.channel == obs.slot_count + 1) {
    out.push_back(vocab_.id("collision"));
  } else if (obs.channel >= 1 && obs.channel <= obs.slot_count) {
    out.push_back(vocab_.id("ue" + std::to_string(obs.channel)));
  } else {
    throw EncodingError("channel state " + std::to_string(obs.channel) + " out of range");
  }
  int prev_id = 0;
  for (const auto& m : obs.per_ue) {
    if (m.ue_id <= prev_id || m.ue_id > obs.slot_count) {
      throw EncodingError("BS observation UE ids must ascend within 1..N");
    }
    prev_id = m.ue_id;
    if (m.ucm < 0 || m.ucm > config_.ucm_vocab_size) throw EncodingError("UCM out of range");
    if (m.prev_dcm < 0 || m.prev_dcm > config_.dcm_vocab_size) throw EncodingError("DCM out of range");
    out.push_back(vocab_.id("ue" + std::to_string(m.ue_id)));
    out.push_back(m.ucm == env::kNoMessage ? vocab_.id(Vocabulary::kNone)
                                           : vocab_.id("u" + std::to_string(m.ucm)));
    out.push_back(m.prev_dcm == env::kNoMessage ? vocab_.id(Vocabulary::kNone)
                                                : vocab_.id("d" + std::to_string(m.prev_dcm)));
  }
  return out;
}

std::vector<TokenId> SemanticMapper::tokenize(std::string_view text) const {
  std::vector<TokenId> out;
  std::istringstream is{std::string(text)};
  std::string word;
  while (is >> word) out.push_back(vocab_.id(word));
  return out;
}

std::string_view SemanticMapper::default_target(AgentKind kind) {
  return kind == AgentKind::kUe ? kUeTarget : kBsTarget;
}

Prompt SemanticMapper::assemble_sie_prompt(const std::vector<TokenId>& obs_tokens, Role role,
                                           std::string_view target,
                                           const std::vector<LinguisticAction>& candidates,
                                           bool sie_enabled) const {
  if (candidates.empty()) throw ContractError("SIE prompt needs at least one candidate");
  Prompt p;
  p.agent_kind = role.kind;
  p.ue_index = role.ue_index;
  p.token_ids = obs_tokens;
  for (TokenId id : obs_tokens) vocab_.token(id);
  auto& ids = p.token_ids;
  if (sie_enabled) {
    ids.push_back(vocab_.id(Vocabulary::kRole));
    ids.push_back(vocab_.id(role.kind == AgentKind::kUe ? "user" : "bs"));
    if (role.ue_index > 0) ids.push_back(vocab_.id("ue" + std::to_string(role.ue_index)));
    ids.push_back(vocab_.id(Vocabulary::kTarget));
    for (TokenId id : tokenize(target)) ids.push_back(id);
  }
  // The candidate block lists the action space factor by factor: every
  // distinct token of the candidate surfaces, in first-appearance order.
  ids.push_back(vocab_.id(Vocabulary::kActionCandidate));
  std::vector<std::vector<TokenId>> columns;
  for (const auto& c : candidates) {
    if (columns.size() < c.surface.size()) columns.resize(c.surface.size());
    for (std::size_t j = 0; j < c.surface.size(); ++j) {
      auto& col = columns[j];
      if (std::find(col.begin(), col.end(), c.surface[j]) == col.end()) col.push_back(c.surface[j]);
    }
  }
  for (std::size_t j = 0; j < columns.size(); ++j) {
    if (j) ids.push_back(vocab_.id("with"));
    ids.insert(ids.end(), columns[j].begin(), columns[j].end());
  }
  return p;
}

const std::vector<LinguisticAction>& SemanticMapper::enumerate_actions(AgentKind kind) const {
  return kind == AgentKind::kUe ? ue_candidates_ : bs_candidates_;
}

LinguisticAction SemanticMapper::decode_action(const std::vector<TokenId>& surface,
                                               AgentKind kind) const {
  for (const auto& c : enumerate_actions(kind)) {
    if (c.surface == surface) return c;
  }
  std::string text;
  for (TokenId id : surface) {
    text += ' ';
    text += (id >= 0 && static_cast<std::size_t>(id) < vocab_.size()) ? vocab_.token(id) : "?";
  }
  throw EncodingError("cannot decode action surface:" + text);
}

Prompt SemanticMapper::ue_prompt(const env::UeObs& obs, bool sie_enabled) const {
  return assemble_sie_prompt(encode_ue_observation(obs), {AgentKind::kUe, obs.ue_id},
                             kUeTarget, ue_candidates_, sie_enabled);
}

Prompt SemanticMapper::bs_prompt(const env::BsObs& obs, int ue_id, bool sie_enabled) const {
  return assemble_sie_prompt(encode_bs_observation(obs), {AgentKind::kBs, ue_id}, kBsTarget,
                             bs_candidates_, sie_enabled);
}

std::vector<TokenId> SemanticMapper::joint_prompt(const std::vector<env::UeObs>& ue_obs,
                                                  const env::BsObs& bs_obs,
                                                  bool sie_enabled) const {
  std::vector<TokenId> out;
  const TokenId sep = vocab_.id(Vocabulary::kSep);
  const TokenId inactive = vocab_.id(Vocabulary::kInactive);
  std::size_t next = 0;
  for (int id = 1; id <= config_.max_ue_count(); ++id) {
    if (next < ue_obs.size() && ue_obs[next].ue_id == id) {
      const auto p = ue_prompt(ue_obs[next], sie_enabled);
      out.insert(out.end(), p.token_ids.begin(), p.token_ids.end());
      ++next;
    } else {
      out.push_back(inactive);
    }
    out.push_back(sep);
  }
  if (next != ue_obs.size()) throw ContractError("UE observations must ascend by ue_id");
  const auto bs = assemble_sie_prompt(encode_bs_observation(bs_obs), {AgentKind::kBs, 0},
                                      kBsTarget, bs_candidates_, sie_enabled);
  out.insert(out.end(), bs.token_ids.begin(), bs.token_ids.end());
  return out;
}

}  // namespace macforge::semantics
