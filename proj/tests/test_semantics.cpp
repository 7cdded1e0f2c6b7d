#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <map>
#include <set>

#include "macforge/error.hpp"
#include "macforge/semantics.hpp"

using namespace macforge;
using namespace macforge::semantics;
using env::PhyAction;

namespace {

EnvConfig cfg() { return EnvConfig{}; }

std::size_t count(const std::vector<TokenId>& ids, TokenId t) {
  return static_cast<std::size_t>(std::count(ids.begin(), ids.end(), t));
}

}  // namespace

TEST(Vocabulary, BijectionAndSpecials) {
  const auto v = Vocabulary::for_config(cfg());
  for (std::size_t i = 0; i < v.size(); ++i) {
    EXPECT_EQ(v.id(v.token(static_cast<TokenId>(i))), static_cast<TokenId>(i));
  }
  for (auto s : {Vocabulary::kNone, Vocabulary::kRole, Vocabulary::kTarget,
                 Vocabulary::kActionCandidate}) {
    EXPECT_EQ(std::count(v.tokens().begin(), v.tokens().end(), std::string(s)), 1);
  }
  EXPECT_GE(v.size(), 50u);
  EXPECT_LE(v.size(), 120u);
  EXPECT_THROW(v.id("nonsense"), EncodingError);
  EXPECT_THROW(v.token(static_cast<TokenId>(v.size())), EncodingError);
  EXPECT_THROW(Vocabulary(std::vector<std::string>{"a", "a"}), EncodingError);
}

TEST(Vocabulary, SaveLoadRoundTrip) {
  const auto v = Vocabulary::for_config(cfg());
  const auto path = std::filesystem::temp_directory_path() / "macforge_vocab_test.txt";
  v.save(path);
  const auto w = Vocabulary::load(path);
  EXPECT_EQ(w.tokens(), v.tokens());
  EXPECT_EQ(w.hash(), v.hash());
  std::filesystem::remove(path);
}

TEST(Vocabulary, HashTracksContents) {
  auto c = cfg();
  const auto a = Vocabulary::for_config(c);
  c.buffer_capacity = 10;
  EXPECT_NE(Vocabulary::for_config(c).hash(), a.hash());
}

TEST(UeObservation, InitialPlaceholder) {
  SemanticMapper m(cfg());
  const auto ids = m.encode_ue_observation({1, 0, {PhyAction::kDoNothing, 1}, env::kNoMessage});
  EXPECT_EQ(m.vocabulary().render(ids), "buffer b0 last wait u1 downlink <none>");
}

TEST(UeObservation, ExhaustivelyInjective) {
  const auto c = cfg();
  SemanticMapper m(c);
  std::set<std::vector<TokenId>> seen;
  int total = 0;
  for (int b = 0; b <= c.buffer_capacity; ++b) {
    for (int p = 0; p < 3; ++p) {
      for (int u = 1; u <= c.ucm_vocab_size; ++u) {
        for (int d = 0; d <= c.dcm_vocab_size; ++d) {
          const auto ids = m.encode_ue_observation({1, b, {static_cast<PhyAction>(p), u}, d});
          for (TokenId id : ids) EXPECT_NO_THROW(m.vocabulary().token(id));
          seen.insert(ids);
          ++total;
        }
      }
    }
  }
  EXPECT_EQ(total, (c.buffer_capacity + 1) * 6 * (c.dcm_vocab_size + 1));
  EXPECT_EQ(static_cast<int>(seen.size()), total);
}

TEST(UeObservation, OutOfRangeThrows) {
  SemanticMapper m(cfg());
  EXPECT_THROW(m.encode_ue_observation({1, 16, {}, 0}), EncodingError);
  EXPECT_THROW(m.encode_ue_observation({1, -1, {}, 0}), EncodingError);
  EXPECT_THROW(m.encode_ue_observation({1, 0, {PhyAction::kDoNothing, 3}, 0}), EncodingError);
  EXPECT_THROW(m.encode_ue_observation({1, 0, {}, 4}), EncodingError);
}

TEST(BsObservation, ChannelTokens) {
  SemanticMapper m(cfg());
  const auto& v = m.vocabulary();
  env::BsObs idle{0, 2, {{1, 0, 0}, {2, 0, 0}}};
  EXPECT_EQ(v.render(m.encode_bs_observation(idle)), "channel idle ue1 <none> <none> ue2 <none> <none>");
  env::BsObs coll{3, 2, {{1, 2, 1}, {2, 2, 3}}};
  const auto ids = m.encode_bs_observation(coll);
  EXPECT_EQ(count(ids, v.id("collision")), 1u);
  env::BsObs one{2, 2, {{1, 1, 2}, {2, 2, 3}}};
  EXPECT_EQ(v.render(m.encode_bs_observation(one)), "channel ue2 ue1 u1 d2 ue2 u2 d3");
  env::BsObs bad{7, 2, {}};
  EXPECT_THROW(m.encode_bs_observation(bad), EncodingError);
}

TEST(BsObservation, RandomizedCollisionSearch) {
  const auto c = cfg();
  SemanticMapper m(c);
  Rng rng(31);
  const int nmax = c.max_ue_count();
  std::map<std::vector<TokenId>, env::BsObs> seen;
  for (int i = 0; i < 100000; ++i) {
    env::BsObs o;
    o.slot_count = nmax;
    o.channel = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(nmax + 2)));
    for (int id = 1; id <= nmax; ++id) {
      if (!bernoulli(rng, 0.6)) continue;
      o.per_ue.push_back({id, static_cast<int>(uniform_index(rng, c.ucm_vocab_size + 1)),
                          static_cast<int>(uniform_index(rng, c.dcm_vocab_size + 1))});
    }
    auto [it, inserted] = seen.emplace(m.encode_bs_observation(o), o);
    if (!inserted) ASSERT_EQ(it->second, o);
  }
}

TEST(Prompt, GrammarWithSie) {
  SemanticMapper m(cfg());
  const auto& v = m.vocabulary();
  const env::UeObs obs{2, 3, {PhyAction::kTransmit, 2}, 2};
  const auto p = m.ue_prompt(obs, true);
  EXPECT_EQ(p.agent_kind, AgentKind::kUe);
  EXPECT_EQ(p.ue_index, 2);
  EXPECT_EQ(v.render(p.token_ids),
            "buffer b3 last transmit u2 downlink d2 <Role> user ue2 <Target> deliver buffered "
            "dpdu without collision <Action candidate> wait transmit delete with u1 u2");
  const TokenId role = v.id(Vocabulary::kRole), target = v.id(Vocabulary::kTarget),
                cand = v.id(Vocabulary::kActionCandidate);
  EXPECT_EQ(count(p.token_ids, role), 1u);
  EXPECT_EQ(count(p.token_ids, target), 1u);
  EXPECT_EQ(count(p.token_ids, cand), 1u);
  const auto pos = [&](TokenId t) { return std::find(p.token_ids.begin(), p.token_ids.end(), t); };
  EXPECT_LT(pos(role), pos(target));
  EXPECT_LT(pos(target), pos(cand));
  const auto obs_len = m.encode_ue_observation(obs).size();
  EXPECT_EQ(static_cast<std::size_t>(pos(role) - p.token_ids.begin()), obs_len);
}

TEST(Prompt, BsRoleNamesTheUe) {
  SemanticMapper m(cfg());
  const env::BsObs obs{0, 3, {{1, 0, 0}, {2, 0, 0}, {3, 0, 0}}};
  const auto p = m.bs_prompt(obs, 3, true);
  EXPECT_EQ(m.vocabulary().render(p.token_ids),
            "channel idle ue1 <none> <none> ue2 <none> <none> ue3 <none> <none> <Role> bs ue3 "
            "<Target> schedule and acknowledge uplink dpdu <Action candidate> d1 d2 d3");
}

TEST(Prompt, AblationKeepsObservationAndCandidatesOnly) {
  SemanticMapper m(cfg());
  const env::UeObs obs{1, 0, {}, 0};
  const auto on = m.ue_prompt(obs, true);
  const auto off = m.ue_prompt(obs, false);
  EXPECT_EQ(m.vocabulary().render(off.token_ids),
            "buffer b0 last wait u1 downlink <none> <Action candidate> wait transmit delete with u1 u2");
  // Same candidates either way.
  const auto& cands = m.enumerate_actions(AgentKind::kUe);
  EXPECT_EQ(cands.size(), 6u);
  EXPECT_NE(on.token_ids, off.token_ids);
  // Without SIE, UEs with the same observation see the same prompt.
  EXPECT_EQ(m.ue_prompt({1, 0, {}, 0}, false).token_ids, m.ue_prompt({2, 0, {}, 0}, false).token_ids);
  EXPECT_NE(m.ue_prompt({1, 0, {}, 0}, true).token_ids, m.ue_prompt({2, 0, {}, 0}, true).token_ids);
}

TEST(Prompt, EmptyCandidatesRejected) {
  SemanticMapper m(cfg());
  EXPECT_THROW(m.assemble_sie_prompt({}, {AgentKind::kUe, 1}, "deliver", {}, true), ContractError);
}

TEST(Prompt, Deterministic) {
  SemanticMapper a(cfg()), b(cfg());
  const env::UeObs obs{4, 7, {PhyAction::kDelete, 1}, 3};
  EXPECT_EQ(a.ue_prompt(obs, true).token_ids, b.ue_prompt(obs, true).token_ids);
}

TEST(Actions, CountsPerConfig) {
  SemanticMapper m(cfg());
  EXPECT_EQ(m.enumerate_actions(AgentKind::kUe).size(), 6u);
  EXPECT_EQ(m.enumerate_actions(AgentKind::kBs).size(), 3u);
  auto c = cfg();
  c.ucm_vocab_size = 1;
  SemanticMapper one(c);
  EXPECT_EQ(one.enumerate_actions(AgentKind::kUe).size(), 3u);
}

TEST(Actions, RoundTripAndDistinctSurfaces) {
  SemanticMapper m(cfg());
  std::set<std::vector<TokenId>> surfaces;
  for (auto kind : {AgentKind::kUe, AgentKind::kBs}) {
    for (const auto& a : m.enumerate_actions(kind)) {
      EXPECT_EQ(m.decode_action(a), a);
      surfaces.insert(a.surface);
    }
  }
  EXPECT_EQ(surfaces.size(), 9u);
  const auto t2 = m.decode_action(m.tokenize("transmit u2"), AgentKind::kUe);
  EXPECT_EQ(t2.ue_action, (env::UeAction{PhyAction::kTransmit, 2}));
}

TEST(Actions, CorruptedSurfaceThrows) {
  SemanticMapper m(cfg());
  EXPECT_THROW(m.decode_action(m.tokenize("u2 transmit"), AgentKind::kUe), EncodingError);
  EXPECT_THROW(m.decode_action(m.tokenize("d1"), AgentKind::kUe), EncodingError);
  EXPECT_THROW(m.decode_action(std::vector<TokenId>{9999}, AgentKind::kBs), EncodingError);
}

TEST(JointPrompt, PlaceholdersForAbsentUes) {
  SemanticMapper m(cfg());
  const auto& v = m.vocabulary();
  const std::vector<env::UeObs> ues{{1, 0, {}, 0}, {3, 0, {}, 0}};
  const env::BsObs bs{0, 5, {{1, 0, 0}, {3, 0, 0}}};
  const auto ids = m.joint_prompt(ues, bs, true);
  EXPECT_EQ(count(ids, v.id(Vocabulary::kSep)), 5u);
  EXPECT_EQ(count(ids, v.id(Vocabulary::kInactive)), 3u);
  const std::vector<env::UeObs> wrong{{3, 0, {}, 0}, {1, 0, {}, 0}};
  EXPECT_THROW(m.joint_prompt(wrong, bs, true), ContractError);
}
