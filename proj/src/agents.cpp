#include "macforge/agents.hpp"

#include "macforge/error.hpp"

namespace macforge::agents {

std::size_t TokenVectorHash::operator()(const std::vector<semantics::TokenId>& v) const noexcept {
  std::size_t h = 0xcbf29ce484222325ULL;
  for (auto t : v) {
    h ^= static_cast<std::size_t>(t) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  }
  return h;
}

std::optional<std::vector<double>> ScratchSource::score(
    const semantics::Prompt& prompt, const std::vector<semantics::LinguisticAction>& candidates) {
  if (use_cache_) {
    if (auto it = cache_.find(prompt.token_ids); it != cache_.end()) return it->second;
  }
  auto out = policy::score_candidates(scorer_, prompt, candidates);
  if (use_cache_) cache_.emplace(prompt.token_ids, out);
  return out;
}

namespace {

void fill_class(CandidateSource& source, const std::vector<semantics::LinguisticAction>& cands,
                std::vector<AgentDecision>& group) {
  for (auto& d : group) {
    auto scores = source.score(d.prompt, cands);
    if (scores && scores->size() == cands.size()) {
      try {
        d.probs = policy::softmax(*scores);
        continue;
      } catch (const ContractError&) {
      }
    }
    d.valid = false;
    d.probs.assign(cands.size(), 1.0 / static_cast<double>(cands.size()));
  }
}

void sample_class(std::vector<AgentDecision>& group, const FusionConfig& fusion, Rng& rng,
                  bool greedy) {
  if (fusion.enabled && group.size() > 1) {
    std::vector<std::vector<double>> inputs;
    for (const auto& d : group) inputs.push_back(d.probs);
    const auto fused = policy::fuse(inputs, fusion.epsilon);
    for (auto& d : group) d.probs = fused.probs;
  }
  for (auto& d : group) {
    const auto s = policy::sample_index(d.probs, rng, greedy);
    d.chosen = s.index;
    d.logprob = s.logprob;
  }
}

}  // namespace

SlotDecision decide_slot(CandidateSource& source, const semantics::SemanticMapper& mapper,
                         const std::vector<env::UeObs>& ue_obs, const env::BsObs& bs_obs,
                         const PromptConfig& prompt, const FusionConfig& fusion, Rng& rng,
                         bool greedy) {
  using semantics::AgentKind;
  SlotDecision out;
  for (const auto& o : ue_obs) {
    out.ue.push_back({mapper.ue_prompt(o, prompt.sie_enabled), {}, 0, 0.0, true});
  }
  for (const auto& o : ue_obs) {
    out.bs.push_back({mapper.bs_prompt(bs_obs, o.ue_id, prompt.sie_enabled), {}, 0, 0.0, true});
  }
  const auto& ue_cands = mapper.enumerate_actions(AgentKind::kUe);
  const auto& bs_cands = mapper.enumerate_actions(AgentKind::kBs);
  fill_class(source, ue_cands, out.ue);
  fill_class(source, bs_cands, out.bs);
  sample_class(out.ue, fusion, rng, greedy);
  sample_class(out.bs, fusion, rng, greedy);
  for (const auto& d : out.ue) out.action.ue_actions.push_back(ue_cands[d.chosen].ue_action);
  for (const auto& d : out.bs) out.action.bs_dcms.push_back(bs_cands[d.chosen].dcm);
  return out;
}

TokenPolicy::TokenPolicy(std::shared_ptr<CandidateSource> source,
                         const semantics::SemanticMapper& mapper, PromptConfig prompt,
                         FusionConfig fusion, bool greedy, std::string name)
    : source_(std::move(source)),
      mapper_(mapper),
      prompt_(prompt),
      fusion_(fusion),
      greedy_(greedy),
      name_(std::move(name)) {}

void TokenPolicy::reset(std::uint64_t seed) { rng_.seed(seed); }

env::JointAction TokenPolicy::act(const std::vector<env::UeObs>& ue_obs, const env::BsObs& bs_obs) {
  auto slot = decide_slot(*source_, mapper_, ue_obs, bs_obs, prompt_, fusion_, rng_, greedy_);
  for (const auto* group : {&slot.ue, &slot.bs}) {
    for (const auto& d : *group) {
      ++stats_.decisions;
      if (!d.valid) ++stats_.invalid;
    }
  }
  return std::move(slot.action);
}

}  // namespace macforge::agents
